#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "camswarm/agents.hpp"
#include "camswarm/geometry.hpp"
#include "camswarm/swarm_sim.hpp"
#include "camswarm/sync.hpp"

namespace camswarm::world {

using agents::Pose;
using netsim::SimTime;

/// The subject at the center of the array and the phones' camera intrinsics.
/// The subject is an upright billboard that turns to face each camera, so its
/// apparent size depends only on distance.
struct Scene {
  geometry::Vec3 center{0, 0, 0};
  double target_width = 0.5;
  double target_height = 1.7;
  double focal_px = 1000;
  int width_px = 1920;
  int height_px = 1080;

  /// Throws Error(Validation).
  void validate() const;
};

struct CaptureReport {
  std::uint32_t capture_id = 0;
  SimTime t_fire_global = 0;
  sync::CaptureOutcome outcome;
};

/// Devices standing around a subject, running the swarm protocol over the
/// simulated network, optionally driven by agents.
class World {
 public:
  World(netsim::NetworkModel network, Scene scene, agents::AgentPolicy policy, std::uint64_t seed,
        swarm::SwarmConfig cfg = {});
  World(const World&) = delete;
  World& operator=(const World&) = delete;

  void add_device(DeviceId id, Pose pose, SimTime clock_offset = 0);
  std::vector<DeviceId> devices() const { return sim_.devices(); }
  /// Throws Error(Validation) for a non-positive or non-finite radius.
  void place(DeviceId id, Pose pose);
  const Pose& pose(DeviceId id) const;

  geometry::CameraModel camera(DeviceId id) const;
  /// Normalized box the subject occupies in the device's viewport.
  geometry::GuideBox observe(DeviceId id) const;
  /// Fit of the observed box against the guide box this device knows, if any.
  std::optional<geometry::GuideFit> fit(DeviceId id) const;
  /// Heading of the device's optical axis against north.
  double true_yaw(DeviceId id) const;

  void host(DeviceId id);
  void join(DeviceId id, DeviceId via);
  /// Sets the guide box to what `id` currently sees.
  void guide_from_view(DeviceId id);
  void set_guide_box(DeviceId id, const geometry::GuideBox& box);
  /// Places agent devices at random (same draw for every policy) and starts ticking.
  void start_agents(bool random_start = true);
  std::uint32_t capture(protocol::CaptureMode mode, std::uint32_t video_duration_ms,
                        double rate_hz = sync::kDefaultRateHz);

  void run_until(SimTime t_global);
  SimTime now() const { return sim_.now(); }

  swarm::SwarmSim& sim() { return sim_; }
  const swarm::SwarmSim& sim() const { return sim_; }
  const agents::AgentPolicy& policy() const { return policy_; }
  const Scene& scene() const { return scene_; }
  std::optional<DeviceId> host_id() const { return host_; }
  bool agents_running() const { return agents_running_; }
  std::size_t agent_moves() const { return moves_; }

  /// Ground-truth spacing of all devices, measured against the host (or the
  /// lowest id before there is one).
  std::vector<double> true_rel_yaws() const;
  double angle_rsd() const;
  double size_rsd() const;

  /// Time of the last completed join, and the first time after it at which
  /// every joined device held the same member set.
  std::optional<SimTime> last_join_at() const { return last_join_; }
  std::optional<SimTime> members_consistent_at() const { return consistent_since_; }
  /// First agent tick at which angle_rsd dropped to `threshold` or below.
  std::optional<SimTime> agents_converged_at() const { return agents_converged_; }
  double convergence_threshold = 0.10;

  std::vector<CaptureReport> capture_reports() const;

 private:
  void agent_tick();
  void observe_event(DeviceId id, const swarm::SwarmNode& node, SimTime t);
  DeviceId reference() const;

  Scene scene_;
  agents::AgentPolicy policy_;
  std::uint64_t seed_;
  swarm::SwarmSim sim_;
  Rng noise_rng_;
  Rng placement_rng_;
  std::map<DeviceId, Pose> poses_;
  std::optional<DeviceId> host_;
  bool agents_running_ = false;
  SimTime next_agent_tick_ = 0;
  std::map<DeviceId, swarm::Phase> phases_;
  std::optional<SimTime> last_join_;
  std::optional<SimTime> consistent_since_;
  std::optional<SimTime> agents_converged_;
  std::size_t moves_ = 0;
};

struct SpacingTrialConfig {
  agents::AgentPolicy policy;
  int devices = 4;
  double loss_prob = 0.1;
  netsim::LatencyDist latency = netsim::UniformLatency{30, 200};
  SimTime duration = netsim::from_ms(60000);
  Scene scene;
};

struct SpacingTrial {
  std::uint64_t seed = 0;
  double initial_angle_rsd = 0;
  double angle_rsd = 0;
  double size_rsd = 0;
  std::optional<SimTime> converged_at;  // relative to agent start
  std::size_t moves = 0;
};

/// Forms a swarm of `devices` phones around the subject, sets the guide box
/// from the host's view, scatters the phones at random and lets the agents
/// run for `duration`.
SpacingTrial run_spacing_trial(const SpacingTrialConfig& cfg, std::uint64_t seed);

}  // namespace camswarm::world
