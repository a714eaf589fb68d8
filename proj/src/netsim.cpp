#include "camswarm/netsim.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>

namespace camswarm::netsim {
namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  for (;;) {
    const auto pos = s.find(sep);
    parts.push_back(s.substr(0, pos));
    if (pos == std::string_view::npos) break;
    s.remove_prefix(pos + 1);
  }
  return parts;
}

std::string frame_kind(const protocol::Bytes& frame) {
  if (frame.size() < protocol::kHeaderSize) return "?";
  const auto k = frame[5];
  if (k < 1 || k > static_cast<std::uint8_t>(protocol::MessageKind::Heartbeat)) return "?";
  return std::string(protocol::to_string(static_cast<protocol::MessageKind>(k)));
}

double parse_number(std::string_view s) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
    throw Error(ErrorCode::Parse, "bad number '" + std::string(s) + "' in latency spec");
  return v;
}

std::string shortest(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace

LatencyDist parse_latency(std::string_view text) {
  const auto parts = split(text, ':');
  const auto family = parts[0];
  if (family == "constant" && parts.size() == 2) {
    return ConstantLatency{parse_number(parts[1])};
  }
  if (family == "uniform" && parts.size() == 3) {
    return UniformLatency{parse_number(parts[1]), parse_number(parts[2])};
  }
  if (family == "exponential" && parts.size() == 3) {
    return ExponentialLatency{parse_number(parts[1]), parse_number(parts[2])};
  }
  throw Error(ErrorCode::Parse, "latency must be constant:<ms>, uniform:<lo>:<hi> or "
                                "exponential:<mean>:<cap>, got '" + std::string(text) + "'");
}

std::string to_string(const LatencyDist& dist) {
  struct Visitor {
    std::string operator()(const ConstantLatency& d) const { return "constant:" + shortest(d.ms); }
    std::string operator()(const UniformLatency& d) const {
      return "uniform:" + shortest(d.lo_ms) + ":" + shortest(d.hi_ms);
    }
    std::string operator()(const ExponentialLatency& d) const {
      return "exponential:" + shortest(d.mean_ms) + ":" + shortest(d.cap_ms);
    }
  };
  return std::visit(Visitor{}, dist);
}

double latency_floor_ms(const LatencyDist& dist) {
  struct Visitor {
    double operator()(const ConstantLatency& d) const { return d.ms; }
    double operator()(const UniformLatency& d) const { return d.lo_ms; }
    double operator()(const ExponentialLatency&) const { return 0.0; }
  };
  return std::visit(Visitor{}, dist);
}

void NetworkModel::validate() const {
  if (!(loss_prob >= 0.0 && loss_prob <= 1.0))
    throw Error(ErrorCode::Validation, "loss_prob must lie in [0, 1]");
  struct Visitor {
    void operator()(const ConstantLatency& d) const {
      if (!(d.ms >= 0)) throw Error(ErrorCode::Validation, "constant latency must be >= 0");
    }
    void operator()(const UniformLatency& d) const {
      if (!(d.lo_ms >= 0 && d.lo_ms <= d.hi_ms))
        throw Error(ErrorCode::Validation, "uniform latency needs 0 <= lo <= hi");
    }
    void operator()(const ExponentialLatency& d) const {
      if (!(d.mean_ms > 0 && d.cap_ms >= 0))
        throw Error(ErrorCode::Validation, "exponential latency needs mean > 0 and cap >= 0");
    }
  };
  std::visit(Visitor{}, latency);
}

void EventQueue::push(Event ev) {
  ev.seq = next_seq_++;
  heap_.push(std::move(ev));
}

Event EventQueue::pop() {
  Event ev = heap_.top();
  heap_.pop();
  return ev;
}

std::string format_trace_line(const TraceRecord& rec) {
  char head[64];
  const long long whole = rec.time / 1000;
  const long long frac = std::llabs(rec.time % 1000);
  std::snprintf(head, sizeof head, "%s%lld.%03lld %u ", (rec.time < 0 && whole == 0) ? "-" : "", whole,
                frac, rec.device);
  std::string line = head + rec.event;
  if (!rec.detail.empty()) line += " " + rec.detail;
  return line;
}

std::string format_trace(const std::vector<TraceRecord>& trace) {
  std::string out;
  for (const auto& rec : trace) {
    out += format_trace_line(rec);
    out += '\n';
  }
  return out;
}

Network::Network(NetworkModel model) : model_(std::move(model)), rng_(model_.seed) {
  model_.validate();
}

void Network::add_device(DeviceId id, SimTime clock_offset) {
  if (id == kBroadcast) throw Error(ErrorCode::Sim, "device id reserved for broadcast");
  if (!devices_.emplace(id, DeviceSlot{clock_offset, true}).second)
    throw Error(ErrorCode::Sim, "device " + std::to_string(id) + " registered twice");
}

std::vector<DeviceId> Network::devices() const {
  std::vector<DeviceId> ids;
  ids.reserve(devices_.size());
  for (const auto& [id, _] : devices_) ids.push_back(id);
  return ids;
}

protocol::Endpoint Network::address_of(DeviceId id) const {
  slot(id);
  protocol::Endpoint ep;
  ep.address.octets = {10, static_cast<std::uint8_t>((id >> 16) & 0xFF),
                       static_cast<std::uint8_t>((id >> 8) & 0xFF), static_cast<std::uint8_t>(id & 0xFF)};
  ep.port = 7000;
  return ep;
}

std::optional<DeviceId> Network::resolve(const protocol::Endpoint& ep) const {
  for (const auto& [id, _] : devices_) {
    if (address_of(id) == ep) return id;
  }
  return std::nullopt;
}

const Network::DeviceSlot& Network::slot(DeviceId id) const {
  auto it = devices_.find(id);
  if (it == devices_.end()) throw Error(ErrorCode::Sim, "unknown device " + std::to_string(id));
  return it->second;
}

SimTime Network::clock_offset(DeviceId id) const { return slot(id).clock_offset; }

void Network::set_online(DeviceId id, bool online) {
  slot(id);
  devices_[id].online = online;
}

bool Network::online(DeviceId id) const { return slot(id).online; }

SimTime Network::sample_latency() {
  struct Visitor {
    Rng& rng;
    double operator()(const ConstantLatency& d) const { return d.ms; }
    double operator()(const UniformLatency& d) const { return rng.uniform(d.lo_ms, d.hi_ms); }
    double operator()(const ExponentialLatency& d) const {
      return std::min(rng.exponential(d.mean_ms), d.cap_ms);
    }
  };
  const double ms = std::visit(Visitor{rng_}, model_.latency);
  return std::max<SimTime>(0, std::llround(ms * 1000.0));
}

std::vector<SendOutcome> Network::send(DeviceId from, DeviceId to, protocol::Bytes frame, SimTime at) {
  const auto& sender = slot(from);
  if (to != kBroadcast) slot(to);
  if (at < now_) throw Error(ErrorCode::Sim, "send scheduled before current simulation time");

  std::vector<DeviceId> recipients;
  if (to == kBroadcast) {
    for (const auto& [id, _] : devices_) {
      if (id != from) recipients.push_back(id);
    }
  } else {
    recipients.push_back(to);
  }

  std::vector<SendOutcome> outcomes;
  outcomes.reserve(recipients.size());
  for (DeviceId rcpt : recipients) {
    // Both draws happen unconditionally so the random stream does not depend
    // on which packets were lost.
    const bool lost = rng_.bernoulli(model_.loss_prob);
    const SimTime latency = sample_latency();
    ++stats_.sent;
    SendOutcome out{rcpt, !lost && sender.online, at + latency, latency};
    if (out.delivered) {
      Event ev;
      ev.at = out.deliver_at;
      ev.device = rcpt;
      ev.kind = EventKind::Deliver;
      ev.from = from;
      ev.frame = frame;
      ev.sent_at = at;
      ev.latency = latency;
      queue_.push(std::move(ev));
    } else {
      ++stats_.dropped;
      if (tracing_) record(at, rcpt, "drop", frame_kind(frame) + " from=" + std::to_string(from));
    }
    outcomes.push_back(out);
  }
  return outcomes;
}

void Network::schedule_timer(DeviceId device, SimTime at, std::uint64_t tag) {
  slot(device);
  if (at < now_) throw Error(ErrorCode::Sim, "timer scheduled before current simulation time");
  Event ev;
  ev.at = at;
  ev.device = device;
  ev.kind = EventKind::Timer;
  ev.tag = tag;
  queue_.push(std::move(ev));
}

void Network::record(SimTime time, DeviceId device, std::string event, std::string detail) {
  trace_.push_back(TraceRecord{time, device, std::move(event), std::move(detail)});
}

std::vector<TraceRecord> Network::run_until(SimTime t_end, const Handler& handler) {
  const std::size_t first = trace_.size();
  while (!queue_.empty() && queue_.top().at <= t_end) {
    Event ev = queue_.pop();
    now_ = ev.at;
    if (ev.kind == EventKind::Deliver && !slot(ev.device).online) {
      ++stats_.dropped;
      if (tracing_) record(ev.at, ev.device, "drop", frame_kind(ev.frame) + " offline from=" + std::to_string(ev.from));
      continue;
    }
    if (tracing_) {
      if (ev.kind == EventKind::Deliver) {
        record(ev.at, ev.device, "deliver",
               frame_kind(ev.frame) + " from=" + std::to_string(ev.from) +
                   " latency_us=" + std::to_string(ev.latency));
      } else {
        record(ev.at, ev.device, "timer", "tag=" + std::to_string(ev.tag));
      }
    }
    if (handler) handler(ev, *this);
  }
  now_ = std::max(now_, t_end);
  return {trace_.begin() + static_cast<std::ptrdiff_t>(first), trace_.end()};
}

}  // namespace camswarm::netsim
