#include "camswarm/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "camswarm/error.hpp"
#include "text.hpp"

namespace camswarm::scenario {

namespace {

[[noreturn]] void fail(int line, const std::string& msg) {
  throw Error(ErrorCode::Scenario, "line " + std::to_string(line) + ": " + msg);
}

// Positional tokens followed by key=value options.
struct Directive {
  int line = 0;
  std::vector<std::string_view> args;
  std::map<std::string, std::string_view> opts;

  void only(std::initializer_list<const char*> allowed) const {
    for (const auto& [k, v] : opts) {
      if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; })) {
        fail(line, "unknown option '" + k + "'");
      }
    }
  }

  template <typename T>
  T num(std::string_view s, const char* what) const {
    const auto v = text::number<T>(s);
    if (!v) fail(line, std::string("bad ") + what + " '" + std::string(s) + "'");
    if constexpr (std::is_floating_point_v<T>) {
      if (!std::isfinite(*v)) fail(line, std::string("bad ") + what + " '" + std::string(s) + "'");
    }
    return *v;
  }

  template <typename T>
  void opt(const char* key, T& out) const {
    const auto it = opts.find(key);
    if (it != opts.end()) out = num<T>(it->second, key);
  }

  std::string_view arg(std::size_t i, const char* what) const {
    if (i >= args.size()) fail(line, std::string("missing ") + what);
    return args[i];
  }

  void arity(std::size_t n) const {
    if (args.size() > n) fail(line, "unexpected '" + std::string(args[n]) + "'");
  }
};

Directive split(int line, const std::vector<std::string_view>& toks, std::size_t from) {
  Directive d;
  d.line = line;
  for (std::size_t i = from; i < toks.size(); ++i) {
    const auto eq = toks[i].find('=');
    if (eq == std::string_view::npos) {
      if (!d.opts.empty()) fail(line, "positional '" + std::string(toks[i]) + "' after options");
      d.args.push_back(toks[i]);
    } else {
      const std::string key(toks[i].substr(0, eq));
      if (key.empty()) fail(line, "empty option name");
      if (!d.opts.emplace(key, toks[i].substr(eq + 1)).second) fail(line, "repeated option '" + key + "'");
    }
  }
  return d;
}

DeviceId device_id(const Directive& d, std::string_view s, const std::set<DeviceId>& known) {
  const auto id = d.num<std::uint32_t>(s, "device id");
  if (!known.count(id)) fail(d.line, "unknown device " + std::to_string(id));
  return id;
}

void run_checked(int line, const auto& fn) {
  try {
    fn();
  } catch (const Error& e) {
    throw Error(e.code(), "line " + std::to_string(line) + ": " + e.what());
  }
}

std::string fixed6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string opt6(const std::optional<double>& v) { return v ? fixed6(*v) : "none"; }

}  // namespace

Scenario parse_scenario(std::string_view src, std::string name) {
  Scenario sc;
  sc.name = std::move(name);
  std::set<DeviceId> known;
  bool have_end = false;
  int lineno = 0;
  for (const auto raw : text::lines(src)) {
    ++lineno;
    if (text::is_comment_or_blank(raw)) continue;
    const auto toks = text::tokens(raw);
    const std::string_view head = toks[0];
    if (have_end) fail(lineno, "nothing may follow 'end'");

    if (head == "seed") {
      auto d = split(lineno, toks, 1);
      d.only({});
      d.arity(1);
      sc.seed = d.num<std::uint64_t>(d.arg(0, "seed value"), "seed");
    } else if (head == "network") {
      auto d = split(lineno, toks, 1);
      d.only({"loss", "latency"});
      d.arity(0);
      d.opt("loss", sc.network.loss_prob);
      if (const auto it = d.opts.find("latency"); it != d.opts.end()) {
        try {
          sc.network.latency = netsim::parse_latency(it->second);
        } catch (const Error& e) {
          fail(lineno, e.what());
        }
      }
      try {
        sc.network.validate();
      } catch (const Error& e) {
        fail(lineno, e.what());
      }
    } else if (head == "target") {
      auto d = split(lineno, toks, 1);
      d.only({"width", "height"});
      d.arity(0);
      d.opt("width", sc.scene.target_width);
      d.opt("height", sc.scene.target_height);
    } else if (head == "camera") {
      auto d = split(lineno, toks, 1);
      d.only({"focal", "width", "height"});
      d.arity(0);
      d.opt("focal", sc.scene.focal_px);
      d.opt("width", sc.scene.width_px);
      d.opt("height", sc.scene.height_px);
      try {
        sc.scene.validate();
      } catch (const Error& e) {
        fail(lineno, e.what());
      }
    } else if (head == "agents") {
      auto d = split(lineno, toks, 1);
      d.only({"policy", "gain", "noise_deg", "tick_ms", "desired_gap_deg", "arc_deg", "radius_jitter",
              "max_step_deg", "stop_tolerance_deg"});
      d.arity(0);
      if (const auto it = d.opts.find("policy"); it != d.opts.end()) {
        try {
          sc.policy.kind = agents::parse_policy(it->second);
        } catch (const Error& e) {
          fail(lineno, e.what());
        }
      }
      d.opt("gain", sc.policy.gain);
      d.opt("noise_deg", sc.policy.noise_deg);
      d.opt("tick_ms", sc.policy.tick_ms);
      d.opt("desired_gap_deg", sc.policy.desired_gap_deg);
      d.opt("arc_deg", sc.policy.arc_deg);
      d.opt("radius_jitter", sc.policy.radius_jitter);
      d.opt("max_step_deg", sc.policy.max_step_deg);
      d.opt("stop_tolerance_deg", sc.policy.stop_tolerance_deg);
      try {
        sc.policy.validate();
      } catch (const Error& e) {
        fail(lineno, e.what());
      }
    } else if (head == "device") {
      auto d = split(lineno, toks, 1);
      d.only({"angle", "radius", "offset_ms"});
      d.arity(1);
      DeviceSpec spec;
      spec.line = lineno;
      spec.id = d.num<std::uint32_t>(d.arg(0, "device id"), "device id");
      if (spec.id == 0 || spec.id == netsim::kBroadcast) fail(lineno, "reserved device id");
      if (!known.insert(spec.id).second) fail(lineno, "duplicate device " + std::to_string(spec.id));
      d.opt("angle", spec.pose.angle_deg);
      d.opt("radius", spec.pose.radius);
      d.opt("offset_ms", spec.clock_offset_ms);
      if (!(spec.pose.radius > 0)) fail(lineno, "radius must be positive");
      sc.devices.push_back(spec);
    } else if (head == "at") {
      if (toks.size() < 3) fail(lineno, "expected 'at <ms> <action>'");
      Directive timed;
      timed.line = lineno;
      const auto at = timed.num<std::int64_t>(toks[1], "time");
      if (at < 0) fail(lineno, "time must be non-negative");
      if (!sc.actions.empty() && at < sc.actions.back().at_ms) fail(lineno, "actions must be in time order");
      const std::string_view verb = toks[2];
      auto d = split(lineno, toks, 3);
      Action a;
      a.at_ms = at;
      a.line = lineno;
      if (verb == "host") {
        d.only({});
        d.arity(1);
        a.kind = Host{device_id(d, d.arg(0, "device"), known)};
      } else if (verb == "join") {
        d.only({});
        d.arity(3);
        Join j;
        j.id = device_id(d, d.arg(0, "device"), known);
        if (d.arg(1, "'via'") != "via") fail(lineno, "expected 'via'");
        j.via = device_id(d, d.arg(2, "device to scan"), known);
        if (j.via == j.id) fail(lineno, "a device cannot scan its own QR code");
        a.kind = j;
      } else if (verb == "guide") {
        d.only({});
        const auto id = device_id(d, d.arg(0, "device"), known);
        const auto mode = d.arg(1, "'auto' or 'box'");
        if (mode == "auto") {
          d.arity(2);
          a.kind = GuideAuto{id};
        } else if (mode == "box") {
          d.arity(6);
          GuideSet g;
          g.id = id;
          g.box = {d.num<double>(d.arg(2, "cx"), "cx"), d.num<double>(d.arg(3, "cy"), "cy"),
                   d.num<double>(d.arg(4, "w"), "w"), d.num<double>(d.arg(5, "h"), "h")};
          if (!g.box.valid()) fail(lineno, "guide box must have positive size and lie inside the frame");
          a.kind = g;
        } else {
          fail(lineno, "expected 'auto' or 'box'");
        }
      } else if (verb == "agents") {
        d.only({});
        d.arity(2);
        if (d.arg(0, "'start'") != "start") fail(lineno, "expected 'agents start'");
        AgentsStart s;
        if (d.args.size() == 2) {
          if (d.args[1] == "scatter") {
            s.random_start = true;
          } else if (d.args[1] == "in_place") {
            s.random_start = false;
          } else {
            fail(lineno, "expected 'scatter' or 'in_place'");
          }
        }
        a.kind = s;
      } else if (verb == "capture") {
        d.only({"duration", "rate"});
        d.arity(1);
        Capture c;
        const auto mode = d.arg(0, "'photo' or 'video'");
        if (mode == "photo") {
          c.mode = protocol::CaptureMode::Photo;
          if (d.opts.count("duration")) fail(lineno, "photo capture takes no duration");
        } else if (mode == "video") {
          c.mode = protocol::CaptureMode::Video;
          if (!d.opts.count("duration")) fail(lineno, "video capture needs duration=<ms>");
          d.opt("duration", c.video_duration_ms);
          if (c.video_duration_ms == 0) fail(lineno, "video duration must be positive");
        } else {
          fail(lineno, "expected 'photo' or 'video'");
        }
        d.opt("rate", c.rate_hz);
        if (!(c.rate_hz > 0) || c.rate_hz > 1000) fail(lineno, "rate must be in (0, 1000]");
        a.kind = c;
      } else if (verb == "place") {
        d.only({"angle", "radius"});
        d.arity(1);
        Place p;
        p.id = device_id(d, d.arg(0, "device"), known);
        if (!d.opts.count("angle") || !d.opts.count("radius")) fail(lineno, "place needs angle= and radius=");
        d.opt("angle", p.pose.angle_deg);
        d.opt("radius", p.pose.radius);
        if (!(p.pose.radius > 0)) fail(lineno, "radius must be positive");
        a.kind = p;
      } else if (verb == "offline" || verb == "online") {
        d.only({});
        d.arity(1);
        a.kind = SetOnline{device_id(d, d.arg(0, "device"), known), verb == "online"};
      } else {
        fail(lineno, "unknown action '" + std::string(verb) + "'");
      }
      sc.actions.push_back(std::move(a));
    } else if (head == "end") {
      auto d = split(lineno, toks, 1);
      d.only({});
      d.arity(1);
      sc.end_ms = d.num<std::int64_t>(d.arg(0, "end time"), "end time");
      if (!sc.actions.empty() && sc.end_ms < sc.actions.back().at_ms) fail(lineno, "end precedes the last action");
      if (sc.end_ms <= 0) fail(lineno, "end time must be positive");
      have_end = true;
    } else {
      fail(lineno, "unknown directive '" + std::string(head) + "'");
    }
  }
  if (sc.devices.empty()) fail(lineno + 1, "no devices declared");
  if (!have_end) fail(lineno + 1, "missing 'end <ms>'");
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Scenario, "cannot open scenario '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  std::string name = path;
  if (const auto slash = name.find_last_of('/'); slash != std::string::npos) name = name.substr(slash + 1);
  if (const auto dot = name.rfind('.'); dot != std::string::npos && dot > 0) name = name.substr(0, dot);
  return parse_scenario(ss.str(), name);
}

Runner::Runner(Scenario sc, std::optional<std::uint64_t> seed_override)
    : sc_(std::move(sc)),
      seed_(seed_override.value_or(sc_.seed)),
      world_(std::make_unique<world::World>(
          netsim::NetworkModel{sc_.network.loss_prob, sc_.network.latency, derive_seed(seed_, 7)}, sc_.scene,
          sc_.policy, seed_)) {
  for (const auto& d : sc_.devices) {
    run_checked(d.line, [&] { world_->add_device(d.id, d.pose, netsim::from_ms(d.clock_offset_ms)); });
  }
}

void Runner::apply(const Action& a) {
  run_checked(a.line, [&] {
    std::visit(
        [&](const auto& act) {
          using T = std::decay_t<decltype(act)>;
          if constexpr (std::is_same_v<T, Host>) {
            world_->host(act.id);
          } else if constexpr (std::is_same_v<T, Join>) {
            world_->join(act.id, act.via);
          } else if constexpr (std::is_same_v<T, GuideAuto>) {
            world_->guide_from_view(act.id);
          } else if constexpr (std::is_same_v<T, GuideSet>) {
            world_->set_guide_box(act.id, act.box);
          } else if constexpr (std::is_same_v<T, AgentsStart>) {
            world_->start_agents(act.random_start);
            agents_started_ = world_->now();
          } else if constexpr (std::is_same_v<T, Capture>) {
            world_->capture(act.mode, act.video_duration_ms, act.rate_hz);
          } else if constexpr (std::is_same_v<T, Place>) {
            world_->place(act.id, act.pose);
          } else if constexpr (std::is_same_v<T, SetOnline>) {
            world_->sim().set_online(act.id, act.online);
          }
        },
        a.kind);
  });
}

void Runner::advance_to(SimTime t_global) {
  while (next_action_ < sc_.actions.size()) {
    const auto& a = sc_.actions[next_action_];
    const SimTime at = netsim::from_ms(a.at_ms);
    if (at > t_global) break;
    world_->run_until(at);
    ++next_action_;
    apply(a);
  }
  world_->run_until(t_global);
}

Report Runner::report() const {
  Report r;
  r.scenario = sc_.name;
  r.seed = seed_;
  r.policy = std::string(agents::to_string(sc_.policy.kind));
  const auto ids = world_->devices();
  r.devices = ids.size();
  for (DeviceId id : ids) {
    if (world_->sim().node(id).phase() >= swarm::Phase::Positioning) ++r.joined;
  }
  if (const auto last = world_->last_join_at()) {
    if (const auto ok = world_->members_consistent_at()) r.members_converged_ms = netsim::to_ms(*ok - *last);
  }
  try {
    r.angle_rsd = world_->angle_rsd();
  } catch (const Error&) {
  }
  try {
    r.size_rsd = world_->size_rsd();
  } catch (const Error&) {
  }
  if (agents_started_) {
    if (const auto c = world_->agents_converged_at()) r.agents_converged_ms = netsim::to_ms(*c - *agents_started_);
  }
  for (const auto& c : world_->capture_reports()) {
    CaptureLine line;
    line.capture_id = c.capture_id;
    line.devices = c.outcome.devices.size();
    line.missed = c.outcome.missed_count;
    line.miss_rate = c.outcome.miss_rate;
    line.mean_latency_ms = c.outcome.mean_latency_ms;
    line.max_skew_ms = c.outcome.max_skew_ms;
    r.captures.push_back(line);
  }
  r.errors = world_->sim().errors().size();
  return r;
}

std::string Runner::trace() const { return netsim::format_trace(world_->sim().network().trace()); }

std::string format_report(const Report& r) {
  std::string out;
  auto kv = [&](const char* k, const std::string& v) { out += std::string(k) + ": " + v + "\n"; };
  kv("scenario", r.scenario);
  kv("seed", std::to_string(r.seed));
  kv("devices", std::to_string(r.devices));
  kv("joined", std::to_string(r.joined));
  kv("policy", r.policy);
  kv("members_converged_ms", opt6(r.members_converged_ms));
  kv("angle_rsd", opt6(r.angle_rsd));
  kv("size_rsd", opt6(r.size_rsd));
  kv("agents_converged_ms", opt6(r.agents_converged_ms));
  kv("captures", std::to_string(r.captures.size()));
  for (const auto& c : r.captures) {
    out += "capture " + std::to_string(c.capture_id) + " devices=" + std::to_string(c.devices) +
           " missed=" + std::to_string(c.missed) + " miss_rate=" + fixed6(c.miss_rate) +
           " mean_latency_ms=" + (std::isnan(c.mean_latency_ms) ? std::string("none") : fixed6(c.mean_latency_ms)) +
           " max_skew_ms=" + fixed6(c.max_skew_ms) + "\n";
  }
  kv("errors", std::to_string(r.errors));
  return out;
}

RunOutput run_scenario(const Scenario& sc, std::optional<std::uint64_t> seed_override) {
  Runner runner(sc, seed_override);
  runner.run_to_end();
  RunOutput out;
  out.report = runner.report();
  out.report_text = format_report(out.report);
  out.trace_text = runner.trace();
  return out;
}

}  // namespace camswarm::scenario
