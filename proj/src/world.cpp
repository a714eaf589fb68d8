#include "camswarm/world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>

#include "camswarm/error.hpp"

namespace camswarm::world {

namespace {

std::string fixed(double v, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

void Scene::validate() const {
  if (!(target_width > 0) || !(target_height > 0)) throw Error(ErrorCode::Validation, "target size must be positive");
  if (!(focal_px > 0) || width_px <= 0 || height_px <= 0) {
    throw Error(ErrorCode::Validation, "camera intrinsics must be positive");
  }
}

World::World(netsim::NetworkModel network, Scene scene, agents::AgentPolicy policy, std::uint64_t seed,
             swarm::SwarmConfig cfg)
    : scene_(scene),
      policy_(policy),
      seed_(seed),
      sim_(network, cfg),
      noise_rng_(derive_seed(seed, 1)),
      placement_rng_(derive_seed(seed, 2)) {
  scene_.validate();
  policy_.validate();
  sim_.set_sensor([this](DeviceId id, SimTime) {
    const double noise = policy_.noise_deg > 0 ? noise_rng_.uniform(-policy_.noise_deg, policy_.noise_deg) : 0.0;
    return geometry::wrap_360(true_yaw(id) + noise);
  });
  sim_.set_observer([this](DeviceId id, const swarm::SwarmNode& node, SimTime t) { observe_event(id, node, t); });
}

void World::add_device(DeviceId id, Pose pose, SimTime clock_offset) {
  sim_.add_device(id, clock_offset);
  phases_[id] = swarm::Phase::Idle;
  place(id, pose);
}

void World::place(DeviceId id, Pose pose) {
  if (!sim_.has_device(id)) throw Error(ErrorCode::Sim, "unknown device " + std::to_string(id));
  if (!std::isfinite(pose.angle_deg) || !std::isfinite(pose.radius) || pose.radius <= 0) {
    throw Error(ErrorCode::Validation, "device pose needs a finite angle and a positive radius");
  }
  pose.angle_deg = geometry::wrap_angle(pose.angle_deg);
  poses_[id] = pose;
  auto& net = sim_.network();
  if (net.tracing()) net.record(now(), id, "place", "angle=" + fixed(pose.angle_deg) + " radius=" + fixed(pose.radius));
}

const Pose& World::pose(DeviceId id) const {
  const auto it = poses_.find(id);
  if (it == poses_.end()) throw Error(ErrorCode::Sim, "unknown device " + std::to_string(id));
  return it->second;
}

geometry::CameraModel World::camera(DeviceId id) const {
  const auto& p = pose(id);
  return geometry::camera_on_circle(scene_.center, p.angle_deg, p.radius, scene_.focal_px, scene_.width_px,
                                    scene_.height_px);
}

geometry::GuideBox World::observe(DeviceId id) const {
  const auto cam = camera(id);
  geometry::PlanarTarget t;
  t.center = scene_.center;
  const double dx = cam.position.x - scene_.center.x;
  const double dy = cam.position.y - scene_.center.y;
  const double n = std::hypot(dx, dy);
  t.normal = {dx / n, dy / n, 0};
  t.width = scene_.target_width;
  t.height = scene_.target_height;
  return cam.normalize(geometry::project_target(cam, t).bbox);
}

std::optional<geometry::GuideFit> World::fit(DeviceId id) const {
  const auto& guide = sim_.node(id).guide_box();
  if (!guide) return std::nullopt;
  return geometry::guide_fit(observe(id), *guide);
}

double World::true_yaw(DeviceId id) const { return geometry::wrap_360(pose(id).angle_deg + 180.0); }

void World::host(DeviceId id) {
  sim_.host(id, mix64(seed_ ^ (static_cast<std::uint64_t>(id) << 17)));
  host_ = id;
  phases_[id] = sim_.node(id).phase();
}

void World::join(DeviceId id, DeviceId via) { sim_.join(id, via); }

void World::guide_from_view(DeviceId id) { sim_.set_guide_box(id, observe(id)); }

void World::set_guide_box(DeviceId id, const geometry::GuideBox& box) { sim_.set_guide_box(id, box); }

void World::start_agents(bool random_start) {
  if (random_start) {
    const DeviceId ref = reference();
    const double center = pose(ref).angle_deg;
    const double base = pose(ref).radius;
    for (DeviceId id : devices()) place(id, agents::random_placement(policy_, center, base, placement_rng_));
  }
  agents_running_ = true;
  next_agent_tick_ = now() + static_cast<SimTime>(std::llround(policy_.tick_ms * 1000));
  auto& net = sim_.network();
  if (net.tracing()) net.record(now(), reference(), "agents_start", "policy=" + std::string(agents::to_string(policy_.kind)));
}

std::uint32_t World::capture(protocol::CaptureMode mode, std::uint32_t video_duration_ms, double rate_hz) {
  if (!host_) throw Error(ErrorCode::State, "capture: no swarm has been hosted");
  return sim_.start_capture(*host_, mode, video_duration_ms, rate_hz);
}

void World::run_until(SimTime t_global) {
  const auto tick = static_cast<SimTime>(std::llround(policy_.tick_ms * 1000));
  while (agents_running_ && next_agent_tick_ <= t_global) {
    sim_.run_until(next_agent_tick_);
    agent_tick();
    next_agent_tick_ += tick;
  }
  sim_.run_until(t_global);
}

void World::agent_tick() {
  std::vector<std::pair<DeviceId, agents::Adjustment>> moves;
  if (policy_.kind == agents::PolicyKind::Guided) {
    for (DeviceId id : devices()) {
      const auto& node = sim_.node(id);
      if (node.phase() != swarm::Phase::Positioning) continue;
      agents::AgentView view;
      view.bearings = node.compass_bearings();
      view.fit = fit(id);
      const auto adj = agents::step_agent(policy_, view);
      if (adj.moved()) moves.emplace_back(id, adj);
    }
  }
  for (const auto& [id, adj] : moves) {
    const auto p = pose(id);
    place(id, {p.angle_deg + adj.angle_deg, p.radius * adj.radius_scale});
    ++moves_;
  }
  if (!agents_converged_ && devices().size() >= 3 && angle_rsd() <= convergence_threshold) {
    agents_converged_ = now();
  }
}

void World::observe_event(DeviceId id, const swarm::SwarmNode& node, SimTime t) {
  auto& prev = phases_[id];
  if (prev == swarm::Phase::Joining && node.phase() == swarm::Phase::Positioning) {
    last_join_ = t;
    consistent_since_.reset();
  }
  prev = node.phase();

  std::optional<std::vector<DeviceId>> common;
  std::vector<DeviceId> joined;
  bool consistent = true;
  for (DeviceId d : devices()) {
    const auto& n = sim_.node(d);
    if (n.phase() < swarm::Phase::Positioning || !sim_.network().online(d)) continue;
    joined.push_back(d);
    const auto m = n.members();
    if (!common) {
      common = m;
    } else if (*common != m) {
      consistent = false;
      break;
    }
  }
  consistent = consistent && common && *common == joined;
  if (!consistent) {
    consistent_since_.reset();
  } else if (!consistent_since_) {
    consistent_since_ = t;
  }
}

DeviceId World::reference() const {
  if (host_) return *host_;
  const auto ids = devices();
  if (ids.empty()) throw Error(ErrorCode::Sim, "world has no devices");
  return ids.front();
}

std::vector<double> World::true_rel_yaws() const {
  const double ref = pose(reference()).angle_deg;
  std::vector<double> out;
  for (const auto& [id, p] : poses_) out.push_back(geometry::wrap_angle(p.angle_deg - ref));
  return out;
}

double World::angle_rsd() const { return geometry::spacing_metrics(true_rel_yaws()).angle_rsd; }

double World::size_rsd() const {
  std::vector<double> heights;
  for (const auto& [id, p] : poses_) heights.push_back(observe(id).h * scene_.height_px);
  return geometry::size_rsd(heights);
}

std::vector<CaptureReport> World::capture_reports() const {
  std::vector<CaptureReport> out;
  for (const auto& start : sim_.capture_starts()) {
    CaptureReport rep;
    rep.capture_id = start.capture_id;
    rep.t_fire_global = start.t_fire_global;
    std::vector<sync::DeviceFire> fires;
    for (DeviceId d : devices()) {
      if (d == start.host) continue;
      const auto& n = sim_.node(d);
      if (n.phase() < swarm::Phase::Positioning) continue;
      sync::DeviceFire f;
      f.device = d;
      for (const auto& rec : sim_.fires()) {
        if (rec.device == d && rec.capture_id == start.capture_id) f.fired_at_global = rec.at_global;
      }
      for (const auto& c : n.captures()) {
        if (c.capture_id == start.capture_id) f.packets_received = c.packets_received;
      }
      if (!f.fired_at_global && n.capture_schedule().capture_id == start.capture_id) {
        f.packets_received = n.capture_schedule().packets_received;
      }
      fires.push_back(f);
    }
    // A capture still counting down has no outcome yet.
    const bool pending = std::any_of(fires.begin(), fires.end(), [](const auto& f) {
      return f.packets_received > 0 && !f.fired_at_global;
    });
    if (pending) continue;
    rep.outcome = sync::capture_outcome(start.t_fire_global, fires);
    out.push_back(std::move(rep));
  }
  return out;
}

SpacingTrial run_spacing_trial(const SpacingTrialConfig& cfg, std::uint64_t seed) {
  if (cfg.devices < 3) throw Error(ErrorCode::InsufficientDevices, "spacing trial needs at least 3 devices");
  if (cfg.duration <= 0) throw Error(ErrorCode::Validation, "spacing trial duration must be positive");
  World w({cfg.loss_prob, cfg.latency, derive_seed(seed, 7)}, cfg.scene, cfg.policy, seed);
  w.sim().network().set_tracing(false);
  Rng offsets(derive_seed(seed, 8));
  for (int i = 1; i <= cfg.devices; ++i) {
    w.add_device(static_cast<DeviceId>(i), {0, 3}, netsim::from_ms(std::llround(offsets.uniform(-500, 500))));
  }
  w.host(1);
  w.run_until(w.now() + netsim::from_ms(50));
  for (int i = 2; i <= cfg.devices; ++i) {
    const auto d = static_cast<DeviceId>(i);
    for (int attempt = 0; w.sim().node(d).phase() != swarm::Phase::Positioning; ++attempt) {
      if (attempt > 50) throw Error(ErrorCode::JoinFailed, "device " + std::to_string(d) + " could not join");
      if (w.sim().node(d).phase() == swarm::Phase::Idle) w.join(d, 1);
      w.run_until(w.now() + netsim::from_ms(600));
    }
  }
  w.guide_from_view(1);
  w.run_until(w.now() + netsim::from_ms(1000));

  SpacingTrial out;
  out.seed = seed;
  w.start_agents(true);
  const SimTime start = w.now();
  out.initial_angle_rsd = w.angle_rsd();
  w.run_until(start + cfg.duration);
  out.angle_rsd = w.angle_rsd();
  out.size_rsd = w.size_rsd();
  if (const auto c = w.agents_converged_at()) out.converged_at = *c - start;
  out.moves = w.agent_moves();
  return out;
}

}  // namespace camswarm::world
