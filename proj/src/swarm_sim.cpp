#include "camswarm/swarm_sim.hpp"

#include "camswarm/error.hpp"

namespace camswarm::swarm {

namespace {

std::uint64_t timer_tag(TimerKind kind, std::uint32_t arg) {
  return (static_cast<std::uint64_t>(kind) << 32) | arg;
}

}  // namespace

SwarmSim::SwarmSim(netsim::NetworkModel model, SwarmConfig cfg) : net_(model), cfg_(cfg) {}

SwarmNode& SwarmSim::add_device(DeviceId id, SimTime clock_offset) {
  net_.add_device(id, clock_offset);
  auto& slot = nodes_[id];
  slot = std::make_unique<SwarmNode>(id, net_.address_of(id), cfg_);
  return *slot;
}

SwarmNode& SwarmSim::node(DeviceId id) {
  const auto it = nodes_.find(id);
  if (it == nodes_.end()) throw Error(ErrorCode::Sim, "unknown device " + std::to_string(id));
  return *it->second;
}

const SwarmNode& SwarmSim::node(DeviceId id) const {
  const auto it = nodes_.find(id);
  if (it == nodes_.end()) throw Error(ErrorCode::Sim, "unknown device " + std::to_string(id));
  return *it->second;
}

std::vector<DeviceId> SwarmSim::devices() const {
  std::vector<DeviceId> out;
  for (const auto& [id, _] : nodes_) out.push_back(id);
  return out;
}

void SwarmSim::refresh_sensor(DeviceId id) {
  if (sensor_) node(id).set_sensor_yaw(sensor_(id, net_.now()));
}

void SwarmSim::host(DeviceId id, std::uint64_t nonce) {
  refresh_sensor(id);
  auto& n = node(id);
  apply(id, n.host_swarm(net_.local_time(id, net_.now()), nonce));
}

void SwarmSim::join(DeviceId id, DeviceId via) {
  const auto code = node(via).qr();
  if (!code) throw Error(ErrorCode::State, "device " + std::to_string(via) + " shows no QR code");
  join_qr(id, *code);
}

void SwarmSim::join_qr(DeviceId id, std::string_view qr_text) {
  refresh_sensor(id);
  auto& n = node(id);
  apply(id, n.join_swarm(net_.local_time(id, net_.now()), qr_text,
                         [this](const protocol::Endpoint& ep) { return net_.resolve(ep); }));
}

void SwarmSim::set_guide_box(DeviceId id, const geometry::GuideBox& box) {
  auto& n = node(id);
  apply(id, n.set_guide_box(net_.local_time(id, net_.now()), box));
}

std::uint32_t SwarmSim::start_capture(DeviceId host, protocol::CaptureMode mode, std::uint32_t video_duration_ms,
                                      double rate_hz) {
  auto& n = node(host);
  apply(host, n.start_capture(net_.local_time(host, net_.now()), mode, video_duration_ms, rate_hz));
  const auto& s = *n.capture_session();
  starts_.push_back({host, s.capture_id, net_.global_time(host, s.t_fire_local)});
  return s.capture_id;
}

void SwarmSim::cancel_capture(DeviceId id) {
  auto& n = node(id);
  apply(id, n.cancel_capture(net_.local_time(id, net_.now())));
}

void SwarmSim::apply(DeviceId id, Effects&& fx) {
  const SimTime now = net_.now();
  for (auto& note : fx.notes) {
    if (note.event == "fire") {
      const auto& rec = node(id).captures().back();
      fires_.push_back({id, rec.capture_id, now, node(id).role() == Role::Host});
    }
    if (net_.tracing()) net_.record(now, id, std::move(note.event), std::move(note.detail));
  }
  for (auto& out : fx.sends) {
    net_.send(id, out.to, protocol::encode_message(out.message), now);
  }
  for (const auto& t : fx.timers) {
    net_.schedule_timer(id, std::max(now, net_.global_time(id, t.at_local)), timer_tag(t.kind, t.arg));
  }
}

void SwarmSim::handle(const netsim::Event& ev) {
  const DeviceId id = ev.device;
  refresh_sensor(id);
  auto& n = node(id);
  const SimTime local = net_.local_time(id, ev.at);
  try {
    if (ev.kind == netsim::EventKind::Timer) {
      apply(id, n.on_timer(local, static_cast<TimerKind>(ev.tag >> 32), static_cast<std::uint32_t>(ev.tag)));
    } else {
      apply(id, n.on_message(local, protocol::decode_message(ev.frame)));
    }
  } catch (const Error& e) {
    std::string msg = std::string(to_string(e.code())) + ": " + e.what();
    if (net_.tracing()) net_.record(ev.at, id, "error", msg);
    errors_.push_back("device " + std::to_string(id) + " " + msg);
  }
  if (observer_) observer_(id, n, ev.at);
}

void SwarmSim::run_until(SimTime t_global) {
  net_.run_until(t_global, [this](const netsim::Event& ev, netsim::Network&) { handle(ev); });
}

}  // namespace camswarm::swarm
