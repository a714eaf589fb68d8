#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "camswarm/world.hpp"

namespace camswarm::scenario {

using netsim::SimTime;

struct DeviceSpec {
  DeviceId id = 0;
  agents::Pose pose;
  std::int64_t clock_offset_ms = 0;
  int line = 0;
};

struct Host {
  DeviceId id = 0;
};
struct Join {
  DeviceId id = 0;
  DeviceId via = 0;
};
struct GuideAuto {
  DeviceId id = 0;
};
struct GuideSet {
  DeviceId id = 0;
  geometry::GuideBox box;
};
struct AgentsStart {
  bool random_start = true;
};
struct Capture {
  protocol::CaptureMode mode = protocol::CaptureMode::Photo;
  std::uint32_t video_duration_ms = 0;
  double rate_hz = sync::kDefaultRateHz;
};
struct Place {
  DeviceId id = 0;
  agents::Pose pose;
};
struct SetOnline {
  DeviceId id = 0;
  bool online = true;
};

using ActionKind = std::variant<Host, Join, GuideAuto, GuideSet, AgentsStart, Capture, Place, SetOnline>;

struct Action {
  std::int64_t at_ms = 0;
  ActionKind kind;
  int line = 0;
};

struct Scenario {
  std::string name = "scenario";
  std::uint64_t seed = 1;
  netsim::NetworkModel network;
  world::Scene scene;
  agents::AgentPolicy policy;
  std::vector<DeviceSpec> devices;
  std::vector<Action> actions;  // in time order
  std::int64_t end_ms = 0;
};

/// Line-based scenario format, see docs/scenario.md. Errors carry
/// ErrorCode::Scenario and a "line N: " prefix.
Scenario parse_scenario(std::string_view text, std::string name = "scenario");
/// Reads and parses a file; a missing file is an ErrorCode::Scenario error.
Scenario load_scenario(const std::string& path);

struct CaptureLine {
  std::uint32_t capture_id = 0;
  std::size_t devices = 0;
  std::size_t missed = 0;
  double miss_rate = 0;
  double mean_latency_ms = 0;  // NaN when nobody fired
  double max_skew_ms = 0;
};

struct Report {
  std::string scenario;
  std::uint64_t seed = 0;
  std::size_t devices = 0;
  std::size_t joined = 0;
  std::string policy;
  std::optional<double> members_converged_ms;  // after the last join
  std::optional<double> angle_rsd;
  std::optional<double> size_rsd;
  std::optional<double> agents_converged_ms;  // after agents start
  std::vector<CaptureLine> captures;
  std::size_t errors = 0;
};

/// Stable `key: value` text, fixed field order and precision.
std::string format_report(const Report& r);

/// Steps a scenario forward in time. Actions due at or before the target are
/// applied in file order. Runtime failures are Error with the action's line.
class Runner {
 public:
  explicit Runner(Scenario sc, std::optional<std::uint64_t> seed_override = std::nullopt);

  void advance_to(SimTime t_global);
  bool finished() const { return world_->now() >= netsim::from_ms(sc_.end_ms) && next_action_ == sc_.actions.size(); }
  void run_to_end() { advance_to(netsim::from_ms(sc_.end_ms)); }

  world::World& world() { return *world_; }
  const world::World& world() const { return *world_; }
  const Scenario& scenario() const { return sc_; }
  std::uint64_t seed() const { return seed_; }
  Report report() const;
  std::string trace() const;

 private:
  void apply(const Action& a);

  Scenario sc_;
  std::uint64_t seed_;
  std::unique_ptr<world::World> world_;
  std::size_t next_action_ = 0;
  std::optional<SimTime> agents_started_;
};

struct RunOutput {
  Report report;
  std::string report_text;
  std::string trace_text;
};

RunOutput run_scenario(const Scenario& sc, std::optional<std::uint64_t> seed_override = std::nullopt);

}  // namespace camswarm::scenario
