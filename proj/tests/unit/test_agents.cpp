#include "camswarm/agents.hpp"

#include <cmath>

#include "camswarm/world.hpp"
#include "test_support.hpp"

using namespace camswarm;
using namespace camswarm::agents;
using doctest::Approx;

namespace {

// Compass bearings an observer at `self` sees for peers at `others`
// (display yaw is the negated angle, so bearing = 180 + self - other).
AgentView view_of(double self, std::initializer_list<double> others) {
  AgentView v;
  DeviceId id = 10;
  for (double a : others) v.bearings.push_back({id++, geometry::wrap_360(180.0 + self - a)});
  return v;
}

AgentPolicy quiet(PolicyKind kind = PolicyKind::Guided) {
  AgentPolicy p;
  p.kind = kind;
  p.noise_deg = 0;
  return p;
}

}  // namespace

TEST_CASE("policy parsing and validation") {
  CHECK(parse_policy("guided") == PolicyKind::Guided);
  CHECK(parse_policy("unguided") == PolicyKind::UnguidedRandom);
  CHECK_ERROR_CODE(parse_policy("lazy"), ErrorCode::Parse);
  AgentPolicy p;
  p.gain = 0;
  CHECK_ERROR_CODE(p.validate(), ErrorCode::Validation);
  p = {};
  p.radius_jitter = 1;
  CHECK_ERROR_CODE(p.validate(), ErrorCode::Validation);
}

TEST_CASE("peer offsets read off the compass") {
  CHECK(peer_offset(180) == Approx(0).scale(1));
  CHECK(peer_offset(150) == Approx(30));  // peer 30 degrees further round
  CHECK(peer_offset(200) == Approx(-20));
}

TEST_CASE("inner agent moves to equalize its gaps") {
  const auto adj = step_agent(quiet(), view_of(10, {0, 40}));
  CHECK(adj.angle_deg == Approx(5));
  CHECK(adj.radius_scale == 1);

  const auto still = step_agent(quiet(), view_of(20, {0, 40}));
  CHECK_FALSE(still.moved());

  AgentPolicy capped = quiet();
  capped.max_step_deg = 3;
  CHECK(step_agent(capped, view_of(10, {0, 40})).angle_deg == Approx(3));
}

TEST_CASE("end agents aim for the desired gap") {
  CHECK(step_agent(quiet(), view_of(0, {20})).angle_deg == Approx(-5));
  CHECK(step_agent(quiet(), view_of(0, {-20})).angle_deg == Approx(5));
  CHECK_FALSE(step_agent(quiet(), view_of(0, {30})).moved());
  CHECK_FALSE(step_agent(quiet(), AgentView{}).moved());
}

TEST_CASE("radius follows the guide box") {
  AgentView v = view_of(20, {0, 40});
  v.fit = geometry::GuideFit{1.4, 0.0, false};
  CHECK(step_agent(quiet(), v).radius_scale == Approx(1.2));
  v.fit = geometry::GuideFit{4.0, 0.0, false};
  CHECK(step_agent(quiet(), v).radius_scale == Approx(1.5));
  v.fit = geometry::GuideFit{1.02, 0.0, true};
  CHECK(step_agent(quiet(), v).radius_scale == 1);
}

TEST_CASE("unguided agents never move") {
  auto v = view_of(10, {0, 40});
  v.fit = geometry::GuideFit{2.0, 0.3, false};
  CHECK_FALSE(step_agent(quiet(PolicyKind::UnguidedRandom), v).moved());

  world::SpacingTrialConfig cfg;
  cfg.policy.kind = PolicyKind::UnguidedRandom;
  const auto t = world::run_spacing_trial(cfg, 3);
  CHECK(t.moves == 0);
  CHECK(t.angle_rsd == Approx(t.initial_angle_rsd));
}

TEST_CASE("random placement stays on the arc") {
  Rng rng(9);
  const AgentPolicy p;
  for (int i = 0; i < 1000; ++i) {
    const auto pose = random_placement(p, 170, 3, rng);
    CHECK(geometry::circular_distance(pose.angle_deg, 170) <= 60.0 + 1e-9);
    CHECK(pose.radius >= 3 * 0.8);
    CHECK(pose.radius <= 3 * 1.2);
  }
}

TEST_CASE("property: noise-free agents reach even spacing from any start") {
  Rng rng(21);
  const auto p = quiet();
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> a(4);
    for (auto& x : a) x = rng.uniform(-60, 60);
    for (int tick = 0; tick < 200; ++tick) {
      std::vector<double> next = a;
      for (std::size_t i = 0; i < a.size(); ++i) {
        AgentView v;
        for (std::size_t j = 0; j < a.size(); ++j) {
          if (j != i) v.bearings.push_back({static_cast<DeviceId>(j), geometry::wrap_360(180.0 + a[i] - a[j])});
        }
        next[i] = a[i] + step_agent(p, v).angle_deg;
      }
      a = next;
    }
    std::optional<double> rsd;
    try {
      rsd = geometry::spacing_metrics(a).angle_rsd;
    } catch (const Error&) {
    }
    REQUIRE(rsd);
    CHECK(*rsd <= 0.05);
  }
}

TEST_CASE("world trial is deterministic and guided spacing converges") {
  world::SpacingTrialConfig cfg;
  const auto a = world::run_spacing_trial(cfg, 11);
  const auto b = world::run_spacing_trial(cfg, 11);
  CHECK(a.angle_rsd == b.angle_rsd);
  CHECK(a.moves == b.moves);
  CHECK(a.moves > 0);
  REQUIRE(a.converged_at);
  CHECK(*a.converged_at <= netsim::from_ms(60000));
  CHECK(a.angle_rsd <= 0.10);
}

TEST_CASE("world geometry: billboard size depends on distance only") {
  world::World w({0.0, netsim::ConstantLatency{50}, 1}, {}, quiet(), 1);
  w.add_device(1, {0, 3});
  w.add_device(2, {75, 3});
  w.add_device(3, {-140, 6});
  CHECK(w.observe(1).h == Approx(w.observe(2).h));
  CHECK(w.observe(3).h == Approx(w.observe(1).h / 2).epsilon(1e-3));
  CHECK(w.observe(1).cx == Approx(0.5));
  CHECK(w.true_yaw(1) == Approx(180));
  CHECK(w.true_yaw(2) == Approx(255));
  CHECK_ERROR_CODE(w.place(1, {0, -1}), ErrorCode::Validation);
}
