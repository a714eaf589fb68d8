#include "camswarm/swarm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "camswarm/error.hpp"
#include "camswarm/rng.hpp"

namespace camswarm::swarm {

namespace proto = camswarm::protocol;

std::string_view to_string(Role role) {
  switch (role) {
    case Role::None: return "none";
    case Role::Host: return "host";
    case Role::Member: return "member";
  }
  return "?";
}

std::string_view to_string(Phase phase) {
  switch (phase) {
    case Phase::Idle: return "idle";
    case Phase::Joining: return "joining";
    case Phase::Positioning: return "positioning";
    case Phase::Armed: return "armed";
    case Phase::Capturing: return "capturing";
    case Phase::Done: return "done";
  }
  return "?";
}

std::string_view to_string(TimerKind kind) {
  switch (kind) {
    case TimerKind::JoinRetry: return "join_retry";
    case TimerKind::OrientationTick: return "orientation_tick";
    case TimerKind::Heartbeat: return "heartbeat";
    case TimerKind::HostTick: return "host_tick";
    case TimerKind::GuideRetry: return "guide_retry";
    case TimerKind::CountdownSend: return "countdown_send";
    case TimerKind::CaptureFire: return "capture_fire";
    case TimerKind::CaptureEnd: return "capture_end";
  }
  return "?";
}

void Effects::send(DeviceId to, proto::Payload payload, DeviceId self) {
  sends.push_back({to, proto::Message{self, std::move(payload)}});
}

void Effects::append(Effects&& other) {
  for (auto& s : other.sends) sends.push_back(std::move(s));
  for (auto& t : other.timers) timers.push_back(t);
  for (auto& n : other.notes) notes.push_back(std::move(n));
}

std::int32_t to_mdeg(double degrees) { return static_cast<std::int32_t>(std::llround(degrees * 1000.0)); }
double from_mdeg(std::int32_t mdeg) { return static_cast<double>(mdeg) / 1000.0; }

namespace {

constexpr std::int32_t kFullTurn = 360'000;
constexpr std::int32_t kHalfTurn = 180'000;

std::int32_t heading_mdeg(double yaw_vs_north) {
  return to_mdeg(geometry::wrap_360(yaw_vs_north)) % kFullTurn;
}

// (-180000, 180000]
std::int32_t wrap_mdeg(std::int32_t x) {
  std::int32_t d = ((x % kFullTurn) + kFullTurn) % kFullTurn;
  return d > kHalfTurn ? d - kFullTurn : d;
}

std::uint32_t to_ppm(double v) {
  return static_cast<std::uint32_t>(std::llround(std::clamp(v, 0.0, 1.0) * proto::kUnitScale));
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

proto::GuideBoxUpdate encode_guide(const geometry::GuideBox& box, DeviceId origin, std::uint32_t revision) {
  proto::GuideBoxUpdate g;
  g.origin = origin;
  g.revision = revision;
  g.cx_ppm = to_ppm(box.cx);
  g.cy_ppm = to_ppm(box.cy);
  g.w_ppm = to_ppm(box.w);
  g.h_ppm = to_ppm(box.h);
  return g;
}

geometry::GuideBox decode_guide(const proto::GuideBoxUpdate& g) {
  const double s = proto::kUnitScale;
  return {g.cx_ppm / s, g.cy_ppm / s, g.w_ppm / s, g.h_ppm / s};
}

SwarmNode::SwarmNode(DeviceId id, proto::Endpoint address, SwarmConfig cfg)
    : id_(id), address_(address), cfg_(cfg) {}

void SwarmNode::require_joined(std::string_view op) const {
  if (!joined()) {
    throw Error(ErrorCode::State, std::string(op) + " needs a joined device (phase " +
                                      std::string(to_string(phase_)) + ")");
  }
}

std::optional<std::string> SwarmNode::qr() const {
  if (!joined() || !qr_) return std::nullopt;
  return proto::encode_qr(*qr_);
}

std::vector<DeviceId> SwarmNode::members() const { return {members_.begin(), members_.end()}; }

std::optional<double> SwarmNode::display_yaw(DeviceId device) const {
  for (const auto& e : table_) {
    if (e.device == device) return e.display_yaw;
  }
  return std::nullopt;
}

std::vector<CompassBearing> SwarmNode::compass_bearings() const {
  std::vector<CompassBearing> out;
  const auto own = display_yaw(id_);
  if (!own) return out;
  for (const auto& e : table_) {
    if (e.device == id_) continue;
    out.push_back({e.device, geometry::compass_placement(*own, e.display_yaw)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Operations

Effects SwarmNode::host_swarm(SimTime now, std::uint64_t nonce) {
  if (phase_ != Phase::Idle) throw Error(ErrorCode::State, "host_swarm: device is already in a swarm");
  Effects fx;
  std::uint64_t sid = mix64((static_cast<std::uint64_t>(id_) << 32) ^ nonce);
  if (sid == 0) sid = 1;
  role_ = Role::Host;
  phase_ = Phase::Positioning;
  swarm_id_ = sid;
  host_ = id_;
  qr_ = proto::QrPayload{1, address_, sid};
  members_ = {id_};
  last_seen_.clear();
  epoch_ = 1;
  have_epoch_ = true;
  fx.note("hosted", "swarm=" + hex64(sid));
  fx.timer(now + cfg_.host_tick, TimerKind::HostTick);
  fx.timer(now + cfg_.orientation_period, TimerKind::OrientationTick);
  broadcast_orientation(fx);
  return fx;
}

Effects SwarmNode::join_swarm(SimTime now, std::string_view qr_text, const AddressBook& book) {
  if (phase_ != Phase::Idle) throw Error(ErrorCode::State, "join_swarm: device is already in a swarm");
  const auto qr = proto::decode_qr(qr_text);
  const auto host = book ? book(qr.host) : std::nullopt;
  if (!host || *host == id_) {
    throw Error(ErrorCode::JoinFailed, "no host reachable at " + qr.host.address.to_string() + ":" +
                                           std::to_string(qr.host.port));
  }
  Effects fx;
  qr_ = qr;
  host_ = *host;
  phase_ = Phase::Joining;
  join_attempt_ = 1;
  ++join_gen_;
  fx.note("join_request", "swarm=" + hex64(qr.swarm_id) + " attempt=1");
  fx.send(*host_, proto::JoinRequest{qr.swarm_id, 1}, id_);
  fx.timer(now + cfg_.join_retry_interval, TimerKind::JoinRetry, join_gen_);
  return fx;
}

Effects SwarmNode::set_guide_box(SimTime now, const geometry::GuideBox& box) {
  require_joined("set_guide_box");
  if (phase_ != Phase::Positioning && phase_ != Phase::Done) {
    throw Error(ErrorCode::State, "set_guide_box: capture in progress");
  }
  box.validate();
  Effects fx;
  if (role_ == Role::Host) {
    guide_ = box;
    guide_origin_ = id_;
    ++guide_revision_;
    fx.note("guide_box", "origin=" + std::to_string(id_) + " revision=" + std::to_string(guide_revision_));
    broadcast_guide(fx);
    return fx;
  }
  ++my_guide_seq_;
  guide_request_ = encode_guide(box, id_, my_guide_seq_);
  guide_attempt_ = 1;
  fx.send(*host_, *guide_request_, id_);
  fx.timer(now + cfg_.guide_retry_interval, TimerKind::GuideRetry, my_guide_seq_);
  return fx;
}

Effects SwarmNode::start_capture(SimTime now, proto::CaptureMode mode, std::uint32_t video_duration_ms,
                                 double rate_hz) {
  if (role_ != Role::Host) throw Error(ErrorCode::State, "start_capture: only the host starts a capture");
  if (session_ && !session_fired_) throw Error(ErrorCode::State, "start_capture: a capture is already pending");
  if (phase_ == Phase::Capturing) throw Error(ErrorCode::State, "start_capture: still recording");
  auto plan = sync::plan_countdown(next_capture_id_, now + netsim::from_ms(sync::kWindowMs), mode,
                                   video_duration_ms, rate_hz);
  ++next_capture_id_;
  Effects fx;
  session_ = std::move(plan);
  session_fired_ = false;
  phase_ = Phase::Armed;
  ++fire_gen_;
  fx.note("capture_armed", "capture=" + std::to_string(session_->capture_id) + " mode=" +
                               std::string(proto::to_string(mode)) + " signals=" +
                               std::to_string(session_->signals.size()));
  for (std::size_t k = 0; k < session_->signals.size(); ++k) {
    const auto& sig = session_->signals[k];
    if (sig.send_at_local <= now) {
      fx.send(netsim::kBroadcast, sig.payload, id_);
    } else {
      fx.timer(sig.send_at_local, TimerKind::CountdownSend, static_cast<std::uint32_t>(k));
    }
  }
  fx.timer(session_->t_fire_local, TimerKind::CaptureFire, fire_gen_);
  return fx;
}

Effects SwarmNode::cancel_capture(SimTime) {
  Effects fx;
  if (role_ == Role::Host) {
    if (!session_ || session_fired_) throw Error(ErrorCode::State, "cancel_capture: nothing armed");
    fx.note("capture_cancelled", "capture=" + std::to_string(session_->capture_id));
    session_.reset();
  } else {
    const auto& s = client_.schedule();
    if (s.empty() || s.fired || cancelled_capture_ == s.capture_id) {
      throw Error(ErrorCode::State, "cancel_capture: nothing armed");
    }
    cancelled_capture_ = s.capture_id;
    fx.note("capture_cancelled", "capture=" + std::to_string(s.capture_id));
  }
  ++fire_gen_;
  phase_ = Phase::Positioning;
  return fx;
}

// ---------------------------------------------------------------------------
// Timers

Effects SwarmNode::on_timer(SimTime now, TimerKind kind, std::uint32_t arg) {
  Effects fx;
  switch (kind) {
    case TimerKind::JoinRetry:
      if (phase_ != Phase::Joining || arg != join_gen_) break;
      if (join_attempt_ < cfg_.join_attempts) {
        ++join_attempt_;
        fx.note("join_request", "swarm=" + hex64(qr_->swarm_id) + " attempt=" + std::to_string(join_attempt_));
        fx.send(*host_, proto::JoinRequest{qr_->swarm_id, static_cast<std::uint8_t>(join_attempt_)}, id_);
        fx.timer(now + cfg_.join_retry_interval, TimerKind::JoinRetry, join_gen_);
      } else {
        fx.note("join_failed", "attempts=" + std::to_string(join_attempt_));
        phase_ = Phase::Idle;
        qr_.reset();
        host_.reset();
        ++join_gen_;
      }
      break;
    case TimerKind::OrientationTick:
      if (!joined()) break;
      if (role_ == Role::Member && phase_ != Phase::Capturing) fx.send(*host_, proto::OrientationReport{heading_mdeg(sensor_yaw_)}, id_);
      fx.timer(now + cfg_.orientation_period, TimerKind::OrientationTick);
      break;
    case TimerKind::Heartbeat:
      if (!joined() || role_ != Role::Member) break;
      fx.send(*host_, proto::Heartbeat{}, id_);
      fx.timer(now + cfg_.heartbeat_period, TimerKind::Heartbeat);
      break;
    case TimerKind::HostTick:
      if (role_ != Role::Host) break;
      host_tick(now, fx);
      fx.timer(now + cfg_.host_tick, TimerKind::HostTick);
      break;
    case TimerKind::GuideRetry:
      if (!guide_request_ || arg != my_guide_seq_) break;
      if (guide_attempt_ < cfg_.guide_attempts) {
        ++guide_attempt_;
        fx.send(*host_, *guide_request_, id_);
        fx.timer(now + cfg_.guide_retry_interval, TimerKind::GuideRetry, my_guide_seq_);
      } else {
        fx.note("guide_request_dropped", "seq=" + std::to_string(my_guide_seq_));
        guide_request_.reset();
      }
      break;
    case TimerKind::CountdownSend:
      if (!session_ || session_fired_ || arg >= session_->signals.size()) break;
      fx.send(netsim::kBroadcast, session_->signals[arg].payload, id_);
      break;
    case TimerKind::CaptureFire:
      if (arg != fire_gen_) break;
      if (role_ == Role::Host) {
        if (session_ && !session_fired_) fire(now, fx);
      } else if (client_.on_timer(now)) {
        fire(now, fx);
      }
      break;
    case TimerKind::CaptureEnd:
      if (arg != fire_gen_ || phase_ != Phase::Capturing) break;
      phase_ = Phase::Done;
      fx.note("capture_done");
      break;
  }
  return fx;
}

void SwarmNode::host_tick(SimTime now, Effects& fx) {
  bool changed = false;
  for (auto it = members_.begin(); it != members_.end();) {
    const DeviceId m = *it;
    const auto seen = last_seen_.find(m);
    if (m != id_ && seen != last_seen_.end() && now - seen->second > cfg_.eviction_after) {
      fx.note("member_evicted", "device=" + std::to_string(m));
      evicted_.insert(m);
      reported_mdeg_.erase(m);
      last_seen_.erase(seen);
      it = members_.erase(it);
      changed = true;
    } else {
      ++it;
    }
  }
  if (changed) {
    ++epoch_;
    broadcast_orientation(fx);
  }
  broadcast_members(fx);
  ++host_ticks_;
  if (guide_ && cfg_.guide_rebroadcast_ticks > 0 &&
      host_ticks_ % static_cast<std::uint64_t>(cfg_.guide_rebroadcast_ticks) == 0) {
    broadcast_guide(fx);
  }
}

void SwarmNode::broadcast_members(Effects& fx) {
  fx.send(netsim::kBroadcast, proto::MemberUpdate{epoch_, members()}, id_);
}

void SwarmNode::broadcast_orientation(Effects& fx) {
  const std::int32_t own = heading_mdeg(sensor_yaw_);
  std::vector<proto::YawEntry> entries;
  for (DeviceId m : members_) {
    if (m == id_) {
      entries.push_back({m, 0});
      continue;
    }
    const auto it = reported_mdeg_.find(m);
    if (it == reported_mdeg_.end()) continue;
    entries.push_back({m, -wrap_mdeg(it->second - own)});
  }
  ++round_counter_;
  const std::size_t per = proto::kMaxYawEntriesPerFrame;
  const auto chunks = static_cast<std::uint8_t>((entries.size() + per - 1) / per);
  for (std::uint8_t c = 0; c < chunks; ++c) {
    proto::OrientationBroadcast b;
    b.round = round_counter_;
    b.chunk = c;
    b.chunk_count = chunks;
    const std::size_t lo = c * per;
    const std::size_t hi = std::min(entries.size(), lo + per);
    b.entries.assign(entries.begin() + static_cast<std::ptrdiff_t>(lo), entries.begin() + static_cast<std::ptrdiff_t>(hi));
    fx.send(netsim::kBroadcast, std::move(b), id_);
  }
  apply_round(round_counter_, std::move(entries), fx);
}

void SwarmNode::broadcast_guide(Effects& fx) {
  if (!guide_) return;
  fx.send(netsim::kBroadcast, encode_guide(*guide_, guide_origin_.value_or(id_), guide_revision_), id_);
}

void SwarmNode::apply_round(std::uint16_t round, std::vector<proto::YawEntry> entries, Effects&) {
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.device < b.device; });
  table_.clear();
  for (const auto& e : entries) table_.push_back({e.device, from_mdeg(e.display_yaw_mdeg)});
  applied_round_ = round;
  have_round_ = true;
  pending_chunks_.clear();
}

void SwarmNode::fire(SimTime now, Effects& fx) {
  CaptureRecord rec;
  if (role_ == Role::Host) {
    session_fired_ = true;
    rec.capture_id = session_->capture_id;
    rec.mode = session_->mode;
    rec.video_duration_ms = session_->video_duration_ms;
  } else {
    const auto& s = client_.schedule();
    rec.capture_id = s.capture_id;
    rec.mode = s.mode;
    rec.video_duration_ms = s.video_duration_ms;
    rec.packets_received = s.packets_received;
    proto::CaptureAck ack;
    ack.capture_id = s.capture_id;
    ack.packets_received = static_cast<std::uint16_t>(std::min<std::uint32_t>(s.packets_received, 0xFFFF));
    ack.fired_at_local_us = now;
    fx.send(*host_, ack, id_);
  }
  rec.fired_at_local = now;
  captures_.push_back(rec);
  fx.note("fire", "capture=" + std::to_string(rec.capture_id) + " packets=" + std::to_string(rec.packets_received));
  if (rec.mode == proto::CaptureMode::Video) {
    phase_ = Phase::Capturing;
    fx.timer(now + netsim::from_ms(rec.video_duration_ms), TimerKind::CaptureEnd, fire_gen_);
  } else {
    phase_ = Phase::Done;
    fx.note("capture_done");
  }
}

// ---------------------------------------------------------------------------
// Messages

Effects SwarmNode::on_message(SimTime now, const proto::Message& msg) {
  Effects fx;
  const DeviceId from = msg.sender;
  if (role_ == Role::Host) {
    if (members_.contains(from)) {
      last_seen_[from] = now;
    } else if (evicted_.contains(from) &&
               (msg.as<proto::OrientationReport>() || msg.as<proto::Heartbeat>())) {
      admit(from, now, fx);
    }
  }
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, proto::JoinRequest>) {
          on_join_request(now, from, p, fx);
        } else if constexpr (std::is_same_v<T, proto::JoinAck>) {
          on_join_ack(now, from, p, fx);
        } else if constexpr (std::is_same_v<T, proto::MemberUpdate>) {
          on_member_update(from, p, fx);
        } else if constexpr (std::is_same_v<T, proto::OrientationReport>) {
          on_report(now, from, p, fx);
        } else if constexpr (std::is_same_v<T, proto::OrientationBroadcast>) {
          on_orientation(from, p, fx);
        } else if constexpr (std::is_same_v<T, proto::GuideBoxUpdate>) {
          on_guide(from, p, fx);
        } else if constexpr (std::is_same_v<T, proto::CountdownPayload>) {
          on_countdown(now, from, p, fx);
        } else if constexpr (std::is_same_v<T, proto::CaptureAck>) {
          on_capture_ack(from, p, fx);
        }
      },
      msg.payload);
  return fx;
}

void SwarmNode::admit(DeviceId device, SimTime now, Effects& fx) {
  members_.insert(device);
  evicted_.erase(device);
  last_seen_[device] = now;
  ++epoch_;
  fx.note("member_joined", "device=" + std::to_string(device) + " epoch=" + std::to_string(epoch_));
  broadcast_members(fx);
}

void SwarmNode::on_join_request(SimTime now, DeviceId from, const proto::JoinRequest& req, Effects& fx) {
  if (role_ != Role::Host) return;
  if (req.swarm_id != swarm_id_) {
    fx.note("join_rejected", "device=" + std::to_string(from) + " swarm=" + hex64(req.swarm_id));
    return;
  }
  if (!members_.contains(from)) {
    if (members_.size() >= cfg_.max_members) {
      fx.note("swarm_full", "device=" + std::to_string(from));
      return;
    }
    admit(from, now, fx);
  }
  fx.send(from, proto::JoinAck{swarm_id_, from}, id_);
}

void SwarmNode::on_join_ack(SimTime now, DeviceId from, const proto::JoinAck& ack, Effects& fx) {
  if (phase_ != Phase::Joining || from != host_) return;
  if (ack.swarm_id != qr_->swarm_id) {
    throw Error(ErrorCode::Protocol, "join ack for swarm " + hex64(ack.swarm_id) + ", expected " +
                                         hex64(qr_->swarm_id));
  }
  if (ack.member != id_) return;
  role_ = Role::Member;
  phase_ = Phase::Positioning;
  swarm_id_ = ack.swarm_id;
  ++join_gen_;
  members_ = {id_, from};
  have_epoch_ = false;
  fx.note("joined", "swarm=" + hex64(swarm_id_) + " attempts=" + std::to_string(join_attempt_));
  start_member_timers(now, fx);
}

void SwarmNode::start_member_timers(SimTime now, Effects& fx) {
  fx.send(*host_, proto::OrientationReport{heading_mdeg(sensor_yaw_)}, id_);
  fx.timer(now + cfg_.orientation_period, TimerKind::OrientationTick);
  fx.timer(now + cfg_.heartbeat_period, TimerKind::Heartbeat);
}

void SwarmNode::on_member_update(DeviceId from, const proto::MemberUpdate& upd, Effects&) {
  if (role_ != Role::Member || !joined() || from != host_) return;
  if (have_epoch_ && !newer16(upd.epoch, epoch_)) return;
  members_ = {upd.members.begin(), upd.members.end()};
  members_.insert(id_);
  epoch_ = upd.epoch;
  have_epoch_ = true;
}

void SwarmNode::on_report(SimTime, DeviceId from, const proto::OrientationReport& rep, Effects& fx) {
  if (role_ != Role::Host || !members_.contains(from)) return;
  reported_mdeg_[from] = rep.yaw_vs_north_mdeg;
  broadcast_orientation(fx);
}

void SwarmNode::on_orientation(DeviceId from, const proto::OrientationBroadcast& b, Effects& fx) {
  if (role_ != Role::Member || !joined() || from != host_) return;
  if (have_round_ && !newer16(b.round, applied_round_)) return;
  if (!pending_chunks_.empty() && b.round != pending_round_) {
    if (!newer16(b.round, pending_round_)) return;
    pending_chunks_.clear();
  }
  if (pending_chunks_.empty()) {
    pending_round_ = b.round;
    pending_chunk_count_ = b.chunk_count;
  }
  if (b.chunk_count != pending_chunk_count_) return;
  pending_chunks_[b.chunk] = b.entries;
  if (pending_chunks_.size() < pending_chunk_count_) return;
  std::vector<proto::YawEntry> all;
  for (auto& [_, part] : pending_chunks_) all.insert(all.end(), part.begin(), part.end());
  apply_round(pending_round_, std::move(all), fx);
}

void SwarmNode::on_guide(DeviceId from, const proto::GuideBoxUpdate& g, Effects& fx) {
  if (!joined()) return;
  if (role_ == Role::Host) {
    if (!members_.contains(from) || g.origin != from) return;
    const auto box = decode_guide(g);
    if (!box.valid()) {
      fx.note("guide_rejected", "device=" + std::to_string(from));
      return;
    }
    auto& last = guide_request_seq_[from];
    if (g.revision > last) {
      last = g.revision;
      guide_ = box;
      guide_origin_ = from;
      ++guide_revision_;
      fx.note("guide_box", "origin=" + std::to_string(from) + " revision=" + std::to_string(guide_revision_));
    }
    broadcast_guide(fx);
    return;
  }
  if (from != host_) return;
  if (g.revision > guide_revision_) {
    guide_ = decode_guide(g);
    guide_revision_ = g.revision;
    guide_origin_ = g.origin;
  }
  if (guide_request_ && g.origin == id_ && g.cx_ppm == guide_request_->cx_ppm && g.cy_ppm == guide_request_->cy_ppm &&
      g.w_ppm == guide_request_->w_ppm && g.h_ppm == guide_request_->h_ppm) {
    guide_request_.reset();
  }
}

void SwarmNode::on_countdown(SimTime now, DeviceId from, const proto::CountdownPayload& p, Effects& fx) {
  if (role_ != Role::Member || !joined() || from != host_) return;
  if (p.capture_id == cancelled_capture_) return;
  const auto step = client_.on_packet(now, p);
  if (step.stale) return;
  if (step.adopted) {
    ++fire_gen_;
    if (phase_ != Phase::Capturing) phase_ = Phase::Armed;
    fx.note("countdown_adopted", "capture=" + std::to_string(p.capture_id) + " remaining_ms=" +
                                     std::to_string(p.remaining_ms));
  }
  if (step.fire_now) {
    fire(now, fx);
    return;
  }
  if (step.arm_timer_at) {
    ++fire_gen_;
    fx.timer(*step.arm_timer_at, TimerKind::CaptureFire, fire_gen_);
  }
}

void SwarmNode::on_capture_ack(DeviceId from, const proto::CaptureAck& ack, Effects&) {
  if (role_ != Role::Host) return;
  acks_[ack.capture_id][from] = ack;
}

}  // namespace camswarm::swarm
