#include "camswarm/sync.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "camswarm/error.hpp"
#include "camswarm/rng.hpp"

namespace camswarm::sync {

namespace {

void check_mode(CaptureMode mode, std::uint32_t video_duration_ms) {
  if (mode == CaptureMode::Photo && video_duration_ms != 0) {
    throw Error(ErrorCode::Validation, "photo capture takes no video duration");
  }
  if (mode == CaptureMode::Video && video_duration_ms == 0) {
    throw Error(ErrorCode::Validation, "video capture needs a duration");
  }
}

CountdownPayload payload_for(const CaptureSession& s, std::int32_t remaining_ms) {
  CountdownPayload p;
  p.capture_id = s.capture_id;
  p.remaining_ms = remaining_ms;
  p.mode = s.mode;
  p.video_duration_ms = s.video_duration_ms;
  return p;
}

}  // namespace

CaptureSession plan_countdown(std::uint32_t capture_id, SimTime t_fire_local, CaptureMode mode,
                              std::uint32_t video_duration_ms, double rate_hz) {
  check_mode(mode, video_duration_ms);
  if (!std::isfinite(rate_hz) || rate_hz <= 0 || rate_hz > 1000) {
    throw Error(ErrorCode::Validation, "broadcast rate must be in (0, 1000] Hz");
  }
  CaptureSession s;
  s.capture_id = capture_id;
  s.mode = mode;
  s.video_duration_ms = video_duration_ms;
  s.t_fire_local = t_fire_local;
  s.broadcast_rate_hz = rate_hz;
  const auto count = static_cast<std::int64_t>(std::floor(kWindowMs * rate_hz / 1000.0)) + 1;
  s.signals.reserve(static_cast<std::size_t>(count));
  for (std::int64_t k = 0; k < count; ++k) {
    const auto elapsed = static_cast<std::int32_t>(std::llround(static_cast<double>(k) * 1000.0 / rate_hz));
    const std::int32_t remaining = std::max(0, kWindowMs - elapsed);
    s.signals.push_back({t_fire_local - netsim::from_ms(remaining), payload_for(s, remaining)});
  }
  return s;
}

CaptureSession plan_single_shot(std::uint32_t capture_id, SimTime t_fire_local, CaptureMode mode,
                                std::uint32_t video_duration_ms) {
  check_mode(mode, video_duration_ms);
  CaptureSession s;
  s.capture_id = capture_id;
  s.mode = mode;
  s.video_duration_ms = video_duration_ms;
  s.t_fire_local = t_fire_local;
  s.broadcast_rate_hz = 0;
  s.window_ms = 0;
  s.signals.push_back({t_fire_local, payload_for(s, 0)});
  return s;
}

CaptureSchedule on_countdown(CaptureSchedule schedule, SimTime recv_local, const CountdownPayload& payload) {
  if (payload.capture_id == 0 || (!schedule.empty() && payload.capture_id < schedule.capture_id)) {
    return schedule;
  }
  if (schedule.empty() || payload.capture_id > schedule.capture_id) {
    schedule = CaptureSchedule{};
    schedule.capture_id = payload.capture_id;
    schedule.mode = payload.mode;
    schedule.video_duration_ms = payload.video_duration_ms;
  }
  ++schedule.packets_received;
  if (schedule.fired) return schedule;
  const SimTime candidate = recv_local + netsim::from_ms(payload.remaining_ms);
  if (!schedule.fire_at_local || candidate < *schedule.fire_at_local) schedule.fire_at_local = candidate;
  if (*schedule.fire_at_local <= recv_local) {
    schedule.fired = true;
    schedule.fired_at_local = recv_local;
  }
  return schedule;
}

CountdownClient::Step CountdownClient::on_packet(SimTime recv_local, const CountdownPayload& payload) {
  Step step;
  const CaptureSchedule before = schedule_;
  schedule_ = on_countdown(schedule_, recv_local, payload);
  if (schedule_.capture_id != payload.capture_id) {
    step.stale = true;
    return step;
  }
  step.adopted = before.capture_id != schedule_.capture_id;
  const bool was_fired = !step.adopted && before.fired;
  if (schedule_.fired && !was_fired) {
    step.fire_now = true;
    return step;
  }
  if (schedule_.fired) return step;
  const bool moved = step.adopted || !before.fire_at_local || *schedule_.fire_at_local < *before.fire_at_local;
  if (moved) {
    step.improved = !step.adopted;
    step.arm_timer_at = schedule_.fire_at_local;
  }
  return step;
}

bool CountdownClient::on_timer(SimTime now_local) {
  if (schedule_.empty() || schedule_.fired || !schedule_.fire_at_local) return false;
  if (now_local < *schedule_.fire_at_local) return false;
  schedule_.fired = true;
  schedule_.fired_at_local = now_local;
  return true;
}

CaptureOutcome capture_outcome(SimTime t_fire_global, std::span<const DeviceFire> fires) {
  CaptureOutcome out;
  std::size_t fired = 0;
  double latency_sum = 0;
  SimTime earliest = std::numeric_limits<SimTime>::max();
  SimTime latest = std::numeric_limits<SimTime>::min();
  for (const auto& f : fires) {
    DeviceOutcome d;
    d.device = f.device;
    d.packets_received = f.packets_received;
    d.missed = f.packets_received == 0;
    if (d.missed) {
      ++out.missed_count;
      d.latency_ms = std::numeric_limits<double>::quiet_NaN();
    } else {
      if (!f.fired_at_global) {
        throw Error(ErrorCode::Validation,
                    "device " + std::to_string(f.device) + " received packets but never fired");
      }
      d.latency_ms = netsim::to_ms(*f.fired_at_global - t_fire_global);
      latency_sum += d.latency_ms;
      ++fired;
      earliest = std::min(earliest, *f.fired_at_global);
      latest = std::max(latest, *f.fired_at_global);
    }
    out.devices.push_back(d);
  }
  out.miss_rate = fires.empty() ? 0.0 : static_cast<double>(out.missed_count) / static_cast<double>(fires.size());
  out.mean_latency_ms = fired ? latency_sum / static_cast<double>(fired) : std::numeric_limits<double>::quiet_NaN();
  out.max_skew_ms = fired >= 2 ? netsim::to_ms(latest - earliest) : 0.0;
  return out;
}

TrialResult run_trial(const TrialConfig& cfg, std::uint64_t seed) {
  if (cfg.clients < 1) throw Error(ErrorCode::Validation, "need at least one client");
  netsim::Network net(netsim::NetworkModel{cfg.loss_prob, cfg.latency, seed});
  net.set_tracing(false);
  Rng offsets(mix64(seed ^ 0x5eed0ff5e75ULL));
  auto draw_offset = [&] {
    return static_cast<SimTime>(std::llround(offsets.uniform(-cfg.max_clock_offset_ms, cfg.max_clock_offset_ms) * 1000));
  };

  constexpr DeviceId host = 1;
  net.add_device(host, draw_offset());
  TrialResult result;
  result.seed = seed;
  std::vector<CountdownClient> clients(static_cast<std::size_t>(cfg.clients));
  for (int i = 0; i < cfg.clients; ++i) {
    ClientTrace t;
    t.device = static_cast<DeviceId>(i + 2);
    t.clock_offset = draw_offset();
    net.add_device(t.device, t.clock_offset);
    result.clients.push_back(t);
  }

  const SimTime t_fire_local = net.local_time(host, 0) + netsim::from_ms(kWindowMs);
  result.t_fire_global = net.global_time(host, t_fire_local);
  const auto session = cfg.single_shot ? plan_single_shot(1, t_fire_local, CaptureMode::Photo, 0)
                                       : plan_countdown(1, t_fire_local, CaptureMode::Photo, 0, cfg.rate_hz);
  for (const auto& sig : session.signals) {
    net.send(host, netsim::kBroadcast, protocol::encode_message({host, sig.payload}),
             net.global_time(host, sig.send_at_local));
  }

  net.run_until(std::numeric_limits<SimTime>::max(), [&](const netsim::Event& ev, netsim::Network& n) {
    const auto idx = static_cast<std::size_t>(ev.device - 2);
    auto& trace = result.clients[idx];
    auto& client = clients[idx];
    const SimTime local = n.local_time(ev.device, ev.at);
    if (ev.kind == netsim::EventKind::Timer) {
      if (client.on_timer(local)) trace.fired_at_global = ev.at;
      return;
    }
    const auto msg = protocol::decode_message(ev.frame);
    if (!trace.min_packet_latency || ev.latency < *trace.min_packet_latency) trace.min_packet_latency = ev.latency;
    const auto* payload = msg.as<CountdownPayload>();
    if (!payload) return;
    const auto step = client.on_packet(local, *payload);
    if (step.fire_now) trace.fired_at_global = ev.at;
    if (step.arm_timer_at) n.schedule_timer(ev.device, n.global_time(ev.device, *step.arm_timer_at), 0);
  });

  std::vector<DeviceFire> fires;
  for (std::size_t i = 0; i < clients.size(); ++i) {
    result.clients[i].packets_received = clients[i].schedule().packets_received;
    fires.push_back({result.clients[i].device, result.clients[i].fired_at_global, result.clients[i].packets_received});
  }
  result.outcome = capture_outcome(result.t_fire_global, fires);
  return result;
}

StudyRow run_study_row(const TrialConfig& cfg, int trials, std::uint64_t base_seed, int jobs,
                       std::vector<TrialResult>* per_trial) {
  if (trials < 1) throw Error(ErrorCode::Validation, "trials must be positive");
  std::vector<TrialResult> results(static_cast<std::size_t>(trials));
  const int workers = std::clamp(jobs, 1, trials);
  auto work = [&](int first) {
    for (int t = first; t < trials; t += workers) {
      results[static_cast<std::size_t>(t)] = run_trial(cfg, derive_seed(base_seed, static_cast<std::uint64_t>(t)));
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
  }

  StudyRow row;
  row.loss_prob = cfg.loss_prob;
  row.rate_hz = cfg.single_shot ? 0.0 : cfg.rate_hz;
  row.single_shot = cfg.single_shot;
  row.trials = trials;
  row.clients = cfg.clients;
  double latency_sum = 0;
  std::uint64_t fired = 0;
  double skew_sum = 0;
  for (const auto& r : results) {
    row.missed += r.outcome.missed_count;
    for (const auto& d : r.outcome.devices) {
      if (!d.missed) {
        latency_sum += d.latency_ms;
        ++fired;
      }
    }
    skew_sum += r.outcome.max_skew_ms;
    row.worst_skew_ms = std::max(row.worst_skew_ms, r.outcome.max_skew_ms);
  }
  const double devices = static_cast<double>(trials) * cfg.clients;
  row.miss_rate = static_cast<double>(row.missed) / devices;
  row.mean_latency_ms = fired ? latency_sum / static_cast<double>(fired) : std::numeric_limits<double>::quiet_NaN();
  row.mean_skew_ms = skew_sum / trials;
  if (per_trial) *per_trial = std::move(results);
  return row;
}

}  // namespace camswarm::sync
