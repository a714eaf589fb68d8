#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <queue>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "camswarm/error.hpp"
#include "camswarm/protocol.hpp"
#include "camswarm/rng.hpp"

namespace camswarm::netsim {

/// Simulation time in integer microseconds. Integer time keeps the countdown
/// arithmetic (receive time + remaining) exact.
using SimTime = std::int64_t;

constexpr SimTime from_ms(std::int64_t ms) { return ms * 1000; }
constexpr double to_ms(SimTime t) { return static_cast<double>(t) / 1000.0; }

inline constexpr DeviceId kBroadcast = 0xFFFFFFFFu;

struct ConstantLatency {
  double ms = 0;
  bool operator==(const ConstantLatency&) const = default;
};
struct UniformLatency {
  double lo_ms = 30;
  double hi_ms = 200;
  bool operator==(const UniformLatency&) const = default;
};
struct ExponentialLatency {
  double mean_ms = 50;
  double cap_ms = 2000;
  bool operator==(const ExponentialLatency&) const = default;
};
using LatencyDist = std::variant<ConstantLatency, UniformLatency, ExponentialLatency>;

/// Parses `constant:<ms>`, `uniform:<lo>:<hi>` or `exponential:<mean>:<cap>`.
/// Throws Error(Parse).
LatencyDist parse_latency(std::string_view text);
std::string to_string(const LatencyDist& dist);
/// Smallest value the distribution can produce, in ms.
double latency_floor_ms(const LatencyDist& dist);

struct NetworkModel {
  double loss_prob = 0.0;
  LatencyDist latency = UniformLatency{30, 200};
  std::uint64_t seed = 1;

  /// Throws Error(Validation).
  void validate() const;
};

enum class EventKind { Deliver, Timer };

struct Event {
  SimTime at = 0;
  std::uint64_t seq = 0;
  DeviceId device = 0;
  EventKind kind = EventKind::Timer;
  // Deliver only.
  DeviceId from = 0;
  protocol::Bytes frame;
  SimTime sent_at = 0;
  SimTime latency = 0;
  // Timer only.
  std::uint64_t tag = 0;
};

/// Min-queue on (time, insertion sequence).
class EventQueue {
 public:
  void push(Event ev);
  Event pop();
  const Event& top() const { return heap_.top(); }
  bool empty() const { return heap_.empty(); }
  std::size_t size() const { return heap_.size(); }

 private:
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      return a.at != b.at ? a.at > b.at : a.seq > b.seq;
    }
  };
  std::priority_queue<Event, std::vector<Event>, Later> heap_;
  std::uint64_t next_seq_ = 0;
};

struct TraceRecord {
  SimTime time = 0;
  DeviceId device = 0;
  std::string event;
  std::string detail;
  bool operator==(const TraceRecord&) const = default;
};

/// `time_ms device event detail`, time printed with microsecond resolution.
std::string format_trace_line(const TraceRecord& rec);
std::string format_trace(const std::vector<TraceRecord>& trace);

struct SendOutcome {
  DeviceId to = 0;
  bool delivered = false;
  SimTime deliver_at = 0;
  SimTime latency = 0;
};

struct LinkStats {
  std::uint64_t sent = 0;
  std::uint64_t dropped = 0;
};

class Network {
 public:
  using Handler = std::function<void(const Event&, Network&)>;

  explicit Network(NetworkModel model);

  void add_device(DeviceId id, SimTime clock_offset = 0);
  bool has_device(DeviceId id) const { return devices_.contains(id); }
  std::vector<DeviceId> devices() const;

  /// Every device gets 10.0.<id/256>.<id%256>:7000 on the simulated LAN.
  protocol::Endpoint address_of(DeviceId id) const;
  std::optional<DeviceId> resolve(const protocol::Endpoint& ep) const;

  SimTime clock_offset(DeviceId id) const;
  SimTime local_time(DeviceId id, SimTime global) const { return global + clock_offset(id); }
  SimTime global_time(DeviceId id, SimTime local) const { return local - clock_offset(id); }

  /// Offline devices neither send nor receive.
  void set_online(DeviceId id, bool online);
  bool online(DeviceId id) const;

  /// Samples loss and latency independently per recipient. `to` may be
  /// kBroadcast (every other registered device). Throws Error(Sim) for an
  /// unknown device or a send time in the past.
  std::vector<SendOutcome> send(DeviceId from, DeviceId to, protocol::Bytes frame, SimTime at);

  void schedule_timer(DeviceId device, SimTime at, std::uint64_t tag);

  /// Processes pending events with time <= t_end in (time, sequence) order and
  /// returns the trace records produced during this call.
  std::vector<TraceRecord> run_until(SimTime t_end, const Handler& handler);

  SimTime now() const { return now_; }
  bool idle() const { return queue_.empty(); }

  void set_tracing(bool on) { tracing_ = on; }
  bool tracing() const { return tracing_; }
  void record(SimTime time, DeviceId device, std::string event, std::string detail = {});
  const std::vector<TraceRecord>& trace() const { return trace_; }

  const LinkStats& stats() const { return stats_; }
  const NetworkModel& model() const { return model_; }

 private:
  struct DeviceSlot {
    SimTime clock_offset = 0;
    bool online = true;
  };

  SimTime sample_latency();
  const DeviceSlot& slot(DeviceId id) const;

  NetworkModel model_;
  Rng rng_;
  std::map<DeviceId, DeviceSlot> devices_;
  EventQueue queue_;
  SimTime now_ = 0;
  bool tracing_ = true;
  std::vector<TraceRecord> trace_;
  LinkStats stats_;
};

}  // namespace camswarm::netsim
