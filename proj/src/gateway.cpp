#include "camswarm/gateway.hpp"

#include <cmath>

#include "camswarm/error.hpp"

namespace camswarm::gateway {

namespace {

json box_json(const geometry::GuideBox& b) { return {{"cx", b.cx}, {"cy", b.cy}, {"w", b.w}, {"h", b.h}}; }

json opt_num(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

json opt_ms(const std::optional<SimTime>& t) { return t ? json(netsim::to_ms(*t)) : json(nullptr); }

json error_reply(const std::string& code, const std::string& message, const std::string& detail = {}) {
  json r{{"ok", false}, {"code", code}, {"message", message}};
  if (!detail.empty()) r["error"] = detail;
  return r;
}

template <typename T>
T field(const json& cmd, const char* key) {
  if (!cmd.contains(key)) throw Error(ErrorCode::Validation, std::string("missing field '") + key + "'");
  return cmd.at(key).get<T>();
}

template <typename T>
T field_or(const json& cmd, const char* key, T fallback) {
  return cmd.contains(key) ? cmd.at(key).get<T>() : fallback;
}

geometry::GuideBox parse_box(const json& j) {
  return {field<double>(j, "cx"), field<double>(j, "cy"), field<double>(j, "w"), field<double>(j, "h")};
}

}  // namespace

Session::Session(scenario::Scenario sc, std::optional<std::uint64_t> seed) : runner_(std::move(sc), seed) {
  state_ = build_state();
}

json Session::snapshot() const { return {{"type", "snapshot"}, {"seq", seq_}, {"state", state_}}; }

std::string Session::connect() {
  std::string id = "c" + std::to_string(next_client_++);
  if (!authority_) authority_ = id;
  return id;
}

std::optional<json> Session::publish() {
  json next = build_state();
  json patch = json::diff(state_, next);
  if (patch.empty()) return std::nullopt;
  state_ = std::move(next);
  ++seq_;
  return json{{"type", "patch"}, {"seq", seq_}, {"patch", std::move(patch)}};
}

std::optional<json> Session::advance_to(SimTime t_global) {
  runner_.advance_to(t_global);
  return publish();
}

json Session::build_state() const {
  const auto& w = runner_.world();
  const auto& sim = w.sim();
  json s;
  s["time_ms"] = netsim::to_ms(w.now());
  const auto host = w.host_id();
  s["host"] = host ? json(*host) : json(nullptr);
  s["phase"] = host ? std::string(swarm::to_string(sim.node(*host).phase())) : std::string(swarm::to_string(swarm::Phase::Idle));
  s["policy"] = std::string(agents::to_string(w.policy().kind));

  json devices = json::array();
  for (DeviceId id : w.devices()) {
    const auto& node = sim.node(id);
    const auto& pose = w.pose(id);
    json d{{"id", id},
           {"angle_deg", pose.angle_deg},
           {"radius_m", pose.radius},
           {"role", std::string(swarm::to_string(node.role()))},
           {"phase", std::string(swarm::to_string(node.phase()))},
           {"online", sim.network().online(id)},
           {"members", node.members()},
           {"display_yaw", opt_num(node.display_yaw(id))},
           {"observed_box", box_json(w.observe(id))}};
    json compass = json::array();
    for (const auto& b : node.compass_bearings()) compass.push_back({{"device", b.device}, {"bearing", b.bearing}});
    d["compass"] = std::move(compass);
    d["guide_box"] = node.guide_box() ? box_json(*node.guide_box()) : json(nullptr);
    if (const auto f = w.fit(id)) {
      d["fit"] = {{"size_ratio", f->size_ratio}, {"center_offset", f->center_offset}, {"satisfied", f->satisfied}};
    } else {
      d["fit"] = nullptr;
    }
    const auto& sch = node.capture_schedule();
    if (sch.capture_id != 0) {
      d["countdown"] = {{"capture_id", sch.capture_id},
                        {"packets_received", sch.packets_received},
                        {"fire_at_local_ms", opt_ms(sch.fire_at_local)},
                        {"fired", sch.fired}};
    } else {
      d["countdown"] = nullptr;
    }
    devices.push_back(std::move(d));
  }
  s["devices"] = std::move(devices);

  std::optional<double> arsd, srsd;
  try {
    arsd = w.angle_rsd();
  } catch (const Error&) {
  }
  try {
    srsd = w.size_rsd();
  } catch (const Error&) {
  }
  s["metrics"] = {{"angle_rsd", opt_num(arsd)}, {"size_rsd", opt_num(srsd)}};

  json captures = json::array();
  for (const auto& c : w.capture_reports()) {
    json per = json::array();
    for (const auto& d : c.outcome.devices) {
      per.push_back({{"device", d.device},
                     {"packets_received", d.packets_received},
                     {"missed", d.missed},
                     {"latency_ms", d.missed ? json(nullptr) : json(d.latency_ms)}});
    }
    captures.push_back({{"capture_id", c.capture_id},
                        {"t_fire_ms", netsim::to_ms(c.t_fire_global)},
                        {"devices", std::move(per)},
                        {"missed", c.outcome.missed_count},
                        {"miss_rate", c.outcome.miss_rate},
                        {"mean_latency_ms", std::isnan(c.outcome.mean_latency_ms) ? json(nullptr)
                                                                                 : json(c.outcome.mean_latency_ms)},
                        {"max_skew_ms", c.outcome.max_skew_ms}});
  }
  s["captures"] = std::move(captures);

  if (timeline_) {
    json views = json::array();
    for (const auto& v : timeline_->views()) views.push_back({{"id", v.id}, {"rel_yaw", v.rel_yaw}, {"media", v.media}});
    json tr = json::array();
    for (const auto& t : timeline_->transitions()) tr.push_back({{"t_ms", t.t_ms}, {"from", t.from}, {"to", t.to}});
    s["timeline"] = {{"duration_ms", timeline_->duration_ms()},
                     {"views", std::move(views)},
                     {"initial", timeline_->initial_view()},
                     {"transitions", std::move(tr)},
                     {"current_view", timeline_->current_view()}};
  } else {
    s["timeline"] = nullptr;
  }
  return s;
}

DeviceId Session::host_or_throw() const {
  const auto h = runner_.world().host_id();
  if (!h) throw Error(ErrorCode::State, "no swarm has been hosted");
  return *h;
}

json Session::dispatch(const std::string& name, const json& cmd) {
  auto& w = runner_.world();
  json extra = json::object();
  if (name == "place_device") {
    const auto id = field<DeviceId>(cmd, "id");
    if (w.sim().node(id).phase() == swarm::Phase::Capturing) {
      throw Error(ErrorCode::State, "device " + std::to_string(id) + " is recording");
    }
    w.place(id, {field<double>(cmd, "angle_deg"), field<double>(cmd, "radius_m")});
  } else if (name == "set_guide_box") {
    const auto dev = field_or<DeviceId>(cmd, "device", host_or_throw());
    w.set_guide_box(dev, parse_box(field<json>(cmd, "box")));
  } else if (name == "guide_from_view") {
    w.guide_from_view(field_or<DeviceId>(cmd, "device", host_or_throw()));
  } else if (name == "host_swarm") {
    w.host(field<DeviceId>(cmd, "id"));
  } else if (name == "join_device") {
    w.join(field<DeviceId>(cmd, "id"), field<DeviceId>(cmd, "via"));
  } else if (name == "set_online") {
    w.sim().set_online(field<DeviceId>(cmd, "id"), field<bool>(cmd, "online"));
  } else if (name == "start_agents") {
    w.start_agents(field_or<bool>(cmd, "scatter", false));
  } else if (name == "arm_capture") {
    const auto mode_s = field_or<std::string>(cmd, "mode", "photo");
    protocol::CaptureMode mode;
    if (mode_s == "photo") {
      mode = protocol::CaptureMode::Photo;
    } else if (mode_s == "video") {
      mode = protocol::CaptureMode::Video;
    } else {
      throw Error(ErrorCode::Validation, "mode must be 'photo' or 'video'");
    }
    host_or_throw();
    extra["capture_id"] = w.capture(mode, field_or<std::uint32_t>(cmd, "duration_ms", 0),
                                    field_or<double>(cmd, "rate_hz", sync::kDefaultRateHz));
  } else if (name == "cancel_capture") {
    w.sim().cancel_capture(field_or<DeviceId>(cmd, "device", host_or_throw()));
  } else if (name == "begin_timeline") {
    std::vector<playback::View> views;
    if (cmd.contains("views")) {
      for (const auto& v : cmd.at("views")) {
        views.push_back({field<std::string>(v, "id"), field<double>(v, "rel_yaw"),
                         field_or<std::string>(v, "media", "-")});
      }
    } else {
      const auto host = host_or_throw();
      const auto& node = w.sim().node(host);
      for (DeviceId id : node.members()) {
        const auto yaw = node.display_yaw(id);
        if (!yaw) continue;
        const auto vid = "cam" + std::to_string(id);
        views.push_back({vid, -*yaw, vid + ".mp4"});
      }
    }
    if (views.empty()) throw Error(ErrorCode::Validation, "timeline needs views");
    const auto initial = field_or<std::string>(cmd, "initial", views.front().id);
    timeline_.emplace(field<std::int64_t>(cmd, "duration_ms"), std::move(views), initial);
  } else if (name == "add_transition") {
    if (!timeline_) throw Error(ErrorCode::State, "no timeline has been started");
    timeline_->add_transition(field<std::int64_t>(cmd, "t_ms"), field<std::string>(cmd, "view"));
  } else if (name == "select_view") {
    if (!timeline_) throw Error(ErrorCode::State, "no timeline has been started");
    const auto vs = playback::build_view_graph(timeline_->views());
    extra["view"] = playback::select_view(vs, field<double>(cmd, "tilt_deg"));
  } else if (name == "export_edl") {
    if (!timeline_) throw Error(ErrorCode::State, "no timeline has been started");
    extra["edl"] = playback::format_edl(playback::export_edl(*timeline_));
  } else {
    throw std::invalid_argument("unknown command '" + name + "'");
  }
  return extra;
}

Session::Reply Session::command(const json& cmd) {
  Reply reply;
  if (!cmd.is_object() || !cmd.contains("cmd") || !cmd.at("cmd").is_string()) {
    reply.body = error_reply("bad_command", "command must be an object with a string 'cmd'");
    return reply;
  }
  const auto name = cmd.at("cmd").get<std::string>();
  if (authority_) {
    const auto it = cmd.find("client");
    if (it == cmd.end() || !it->is_string() || it->get<std::string>() != *authority_) {
      reply.body = error_reply("not_authority", "commands are accepted from " + *authority_ + " only");
      return reply;
    }
  }
  auto& net = runner_.world().sim().network();
  net.record(now(), 0, "command", cmd.dump());
  try {
    json extra = dispatch(name, cmd);
    reply.event = publish();
    reply.body = {{"ok", true}, {"cmd", name}, {"phase", state_.at("phase")}, {"seq", seq_}};
    reply.body.update(extra);
  } catch (const std::invalid_argument& e) {
    reply.body = error_reply("bad_command", e.what());
  } catch (const json::exception& e) {
    reply.body = error_reply("bad_args", e.what());
  } catch (const Error& e) {
    switch (e.code()) {
      case ErrorCode::State:
        reply.body = error_reply("bad_phase", e.what());
        break;
      case ErrorCode::Validation:
      case ErrorCode::Parse:
        reply.body = error_reply("bad_args", e.what(), std::string(to_string(e.code())));
        break;
      default:
        reply.body = error_reply("rejected", e.what(), std::string(to_string(e.code())));
    }
    // A failed command may still have touched the simulation.
    reply.event = publish();
  }
  return reply;
}

std::string to_wire(const json& event) { return event.dump(); }

}  // namespace camswarm::gateway
