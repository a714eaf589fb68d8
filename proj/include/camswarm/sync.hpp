#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "camswarm/netsim.hpp"
#include "camswarm/protocol.hpp"

namespace camswarm::sync {

using netsim::SimTime;
using protocol::CaptureMode;
using protocol::CountdownPayload;

inline constexpr std::int32_t kWindowMs = protocol::kCountdownWindowMs;
inline constexpr double kDefaultRateHz = 20.0;

struct PlannedSignal {
  SimTime send_at_local = 0;  // host clock
  CountdownPayload payload;
};

/// Host-side record of one postponed capture.
struct CaptureSession {
  std::uint32_t capture_id = 0;
  CaptureMode mode = CaptureMode::Photo;
  std::uint32_t video_duration_ms = 0;
  SimTime t_fire_local = 0;  // host clock
  double broadcast_rate_hz = kDefaultRateHz;
  std::int32_t window_ms = kWindowMs;
  std::vector<PlannedSignal> signals;
};

/// floor(window * rate / 1000) + 1 signals; the k-th carries
/// remaining = window - round(k * 1000 / rate) and is sent at t_fire - remaining.
/// Throws Error(Validation) for rate <= 0 or an inconsistent mode/duration.
CaptureSession plan_countdown(std::uint32_t capture_id, SimTime t_fire_local, CaptureMode mode,
                              std::uint32_t video_duration_ms, double rate_hz = kDefaultRateHz);

/// Single fire signal (remaining 0) sent at t_fire: the naive baseline.
CaptureSession plan_single_shot(std::uint32_t capture_id, SimTime t_fire_local, CaptureMode mode,
                                std::uint32_t video_duration_ms);

/// Client-side countdown state for one capture.
struct CaptureSchedule {
  std::uint32_t capture_id = 0;  // 0 = empty
  CaptureMode mode = CaptureMode::Photo;
  std::uint32_t video_duration_ms = 0;
  std::optional<SimTime> fire_at_local;
  std::uint32_t packets_received = 0;
  bool fired = false;
  SimTime fired_at_local = 0;

  bool empty() const { return capture_id == 0; }
};

/// Folds one received countdown packet into the schedule: the candidate fire
/// time is recv + remaining and the schedule keeps the minimum. A candidate
/// already due fires at once. Packets for an older capture leave the schedule
/// untouched.
CaptureSchedule on_countdown(CaptureSchedule schedule, SimTime recv_local, const CountdownPayload& payload);

/// Stateful wrapper that tells the caller when to arm a timer or fire.
class CountdownClient {
 public:
  struct Step {
    bool stale = false;
    bool adopted = false;    // first packet of a new capture
    bool improved = false;   // fire_at moved earlier
    bool fire_now = false;
    std::optional<SimTime> arm_timer_at;
  };

  Step on_packet(SimTime recv_local, const CountdownPayload& payload);
  /// Fires if the schedule is due at `now_local`. Returns true on the firing call only.
  bool on_timer(SimTime now_local);
  void reset() { schedule_ = {}; }

  const CaptureSchedule& schedule() const { return schedule_; }

 private:
  CaptureSchedule schedule_;
};

struct DeviceFire {
  DeviceId device = 0;
  std::optional<SimTime> fired_at_global;
  std::uint32_t packets_received = 0;
};

struct DeviceOutcome {
  DeviceId device = 0;
  bool missed = false;
  double latency_ms = 0;
  std::uint32_t packets_received = 0;
};

struct CaptureOutcome {
  std::vector<DeviceOutcome> devices;
  std::size_t missed_count = 0;
  double miss_rate = 0;
  double mean_latency_ms = 0;  // over devices that fired; NaN if none did
  double max_skew_ms = 0;      // max pairwise fire-time difference
};

/// Throws Error(Validation) for a device that received packets but never fired.
CaptureOutcome capture_outcome(SimTime t_fire_global, std::span<const DeviceFire> fires);

// ---------------------------------------------------------------------------
// Monte-Carlo harness: one host broadcasting a countdown to `clients` devices
// over a netsim network, with the clients running CountdownClient.

struct TrialConfig {
  double loss_prob = 0.5;
  netsim::LatencyDist latency = netsim::UniformLatency{30, 200};
  double rate_hz = kDefaultRateHz;
  bool single_shot = false;
  int clients = 4;
  double max_clock_offset_ms = 500;  // offsets drawn uniformly in +/- this
};

struct ClientTrace {
  DeviceId device = 0;
  SimTime clock_offset = 0;
  std::optional<SimTime> fired_at_global;
  std::uint32_t packets_received = 0;
  std::optional<SimTime> min_packet_latency;  // ground truth from the network
};

struct TrialResult {
  std::uint64_t seed = 0;
  SimTime t_fire_global = 0;
  std::vector<ClientTrace> clients;
  CaptureOutcome outcome;
};

TrialResult run_trial(const TrialConfig& cfg, std::uint64_t seed);

struct StudyRow {
  double loss_prob = 0;
  double rate_hz = 0;  // 0 for the single-shot baseline
  bool single_shot = false;
  int trials = 0;
  int clients = 0;
  std::uint64_t missed = 0;
  double miss_rate = 0;
  double mean_latency_ms = 0;
  double mean_skew_ms = 0;   // mean over trials of the per-trial max skew
  double worst_skew_ms = 0;  // max over trials
};

/// Trial t of a row uses derive_seed(base_seed, t); trials may run on `jobs`
/// threads, aggregation is in trial order.
StudyRow run_study_row(const TrialConfig& cfg, int trials, std::uint64_t base_seed, int jobs = 1,
                       std::vector<TrialResult>* per_trial = nullptr);

}  // namespace camswarm::sync
