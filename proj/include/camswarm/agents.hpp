#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "camswarm/geometry.hpp"
#include "camswarm/rng.hpp"
#include "camswarm/swarm.hpp"

namespace camswarm::agents {

enum class PolicyKind { Guided, UnguidedRandom };

std::string_view to_string(PolicyKind kind);
/// "guided" or "unguided". Throws Error(Parse).
PolicyKind parse_policy(std::string_view text);

struct AgentPolicy {
  PolicyKind kind = PolicyKind::Guided;
  double gain = 0.5;
  double desired_gap_deg = 30;    // spacing the end agents aim for
  double max_step_deg = 10;
  double stop_tolerance_deg = 0.5;
  double noise_deg = 2;           // uniform compass noise, +/- this
  double tick_ms = 1000;
  double arc_deg = 120;           // random placement arc
  double radius_jitter = 0.2;     // random placement radius spread, relative

  /// Throws Error(Validation).
  void validate() const;
};

struct Pose {
  double angle_deg = 0;  // bearing of the device seen from the target
  double radius = 3;
  bool operator==(const Pose&) const = default;
};

/// What an agent sees on its own screen.
struct AgentView {
  std::vector<swarm::CompassBearing> bearings;
  std::optional<geometry::GuideFit> fit;
};

struct Adjustment {
  double angle_deg = 0;
  double radius_scale = 1;
  bool moved() const { return angle_deg != 0 || radius_scale != 1; }
};

/// Offset of each peer along the circle relative to the observer, in
/// (-180, 180], read off the observer's compass.
double peer_offset(double bearing);

/// Guided: proportional step that equalizes the two adjacent gaps (or drives
/// a lone gap to desired_gap_deg for an end agent) and scales the radius to
/// pull size_ratio to 1. UnguidedRandom: never moves.
Adjustment step_agent(const AgentPolicy& policy, const AgentView& view);

/// One-shot placement uniform over the arc centered on `arc_center_deg`.
Pose random_placement(const AgentPolicy& policy, double arc_center_deg, double base_radius, Rng& rng);

}  // namespace camswarm::agents
