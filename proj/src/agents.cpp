#include "camswarm/agents.hpp"

#include <algorithm>
#include <cmath>

#include "camswarm/error.hpp"

namespace camswarm::agents {

std::string_view to_string(PolicyKind kind) {
  return kind == PolicyKind::Guided ? "guided" : "unguided";
}

PolicyKind parse_policy(std::string_view text) {
  if (text == "guided") return PolicyKind::Guided;
  if (text == "unguided" || text == "unguided_random" || text == "random") return PolicyKind::UnguidedRandom;
  throw Error(ErrorCode::Parse, "unknown agent policy '" + std::string(text) + "'");
}

void AgentPolicy::validate() const {
  auto positive = [](double v) { return std::isfinite(v) && v > 0; };
  if (!positive(gain) || gain > 1) throw Error(ErrorCode::Validation, "agent gain must be in (0, 1]");
  if (!positive(desired_gap_deg) || desired_gap_deg >= 180)
    throw Error(ErrorCode::Validation, "desired gap must be in (0, 180)");
  if (!positive(max_step_deg)) throw Error(ErrorCode::Validation, "max step must be positive");
  if (!(stop_tolerance_deg >= 0)) throw Error(ErrorCode::Validation, "stop tolerance must be non-negative");
  if (!(noise_deg >= 0) || !std::isfinite(noise_deg)) throw Error(ErrorCode::Validation, "noise must be non-negative");
  if (!positive(tick_ms)) throw Error(ErrorCode::Validation, "agent tick must be positive");
  if (!positive(arc_deg) || arc_deg > 360) throw Error(ErrorCode::Validation, "arc must be in (0, 360]");
  if (!(radius_jitter >= 0 && radius_jitter < 1)) throw Error(ErrorCode::Validation, "radius jitter must be in [0, 1)");
}

double peer_offset(double bearing) { return -geometry::wrap_angle(bearing - 180.0); }

Adjustment step_agent(const AgentPolicy& policy, const AgentView& view) {
  Adjustment adj;
  if (policy.kind != PolicyKind::Guided) return adj;

  std::optional<double> up, down;  // nearest peer offsets on each side
  for (const auto& b : view.bearings) {
    const double e = peer_offset(b.bearing);
    if (e > 0) {
      if (!up || e < *up) up = e;
    } else if (e < 0) {
      if (!down || e > *down) down = e;
    } else {
      // Coincident peer: any direction splits them.
      if (!up || e < *up) up = 0.0;
    }
  }
  double step = 0;
  if (up && down) {
    step = policy.gain * (*up - (-*down)) / 2.0;
  } else if (up) {
    step = -policy.gain * (policy.desired_gap_deg - *up);
  } else if (down) {
    step = policy.gain * (policy.desired_gap_deg + *down);
  }
  step = std::clamp(step, -policy.max_step_deg, policy.max_step_deg);
  if (std::abs(step) >= policy.stop_tolerance_deg) adj.angle_deg = step;

  if (view.fit && !view.fit->satisfied) {
    adj.radius_scale = std::clamp(1.0 + policy.gain * (view.fit->size_ratio - 1.0), 0.5, 1.5);
  }
  return adj;
}

Pose random_placement(const AgentPolicy& policy, double arc_center_deg, double base_radius, Rng& rng) {
  Pose p;
  p.angle_deg = geometry::wrap_angle(arc_center_deg + rng.uniform(-policy.arc_deg / 2, policy.arc_deg / 2));
  p.radius = base_radius * (1.0 + rng.uniform(-policy.radius_jitter, policy.radius_jitter));
  return p;
}

}  // namespace camswarm::agents
