#include "camswarm/protocol.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <sstream>

namespace camswarm::protocol {
namespace {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) {
    out_.push_back(static_cast<std::uint8_t>(v >> 8));
    out_.push_back(static_cast<std::uint8_t>(v));
  }
  void u32(std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) out_.push_back(static_cast<std::uint8_t>(v >> shift));
  }
  void u64(std::uint64_t v) {
    for (int shift = 56; shift >= 0; shift -= 8) out_.push_back(static_cast<std::uint8_t>(v >> shift));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }

  Bytes& bytes() { return out_; }

 private:
  Bytes out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

  std::uint8_t u8() { return take(1)[0]; }
  std::uint16_t u16() {
    auto b = take(2);
    return static_cast<std::uint16_t>((b[0] << 8) | b[1]);
  }
  std::uint32_t u32() {
    auto b = take(4);
    std::uint32_t v = 0;
    for (auto x : b) v = (v << 8) | x;
    return v;
  }
  std::uint64_t u64() {
    auto b = take(8);
    std::uint64_t v = 0;
    for (auto x : b) v = (v << 8) | x;
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }

  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::span<const std::uint8_t> take(std::size_t n) {
    if (remaining() < n) throw Error(ErrorCode::Frame, "payload shorter than its kind requires");
    auto s = in_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

// Returns a description of the first range violation, or nothing.
std::optional<std::string> range_violation(const Payload& payload) {
  struct Visitor {
    std::optional<std::string> operator()(const JoinRequest& m) const {
      if (m.swarm_id == 0) return "join request with zero swarm id";
      return std::nullopt;
    }
    std::optional<std::string> operator()(const JoinAck& m) const {
      if (m.swarm_id == 0) return "join ack with zero swarm id";
      return std::nullopt;
    }
    std::optional<std::string> operator()(const MemberUpdate& m) const {
      if (m.members.empty() || m.members.size() > kMaxMembers)
        return "member update must list 1.." + std::to_string(kMaxMembers) + " devices";
      return std::nullopt;
    }
    std::optional<std::string> operator()(const OrientationReport& m) const {
      if (m.yaw_vs_north_mdeg < 0 || m.yaw_vs_north_mdeg >= 360000)
        return "yaw_vs_north out of [0, 360000) mdeg";
      return std::nullopt;
    }
    std::optional<std::string> operator()(const OrientationBroadcast& m) const {
      if (m.entries.size() > kMaxYawEntriesPerFrame) return "too many yaw entries in one frame";
      if (m.chunk_count == 0 || m.chunk >= m.chunk_count) return "chunk index out of range";
      for (const auto& e : m.entries) {
        if (e.display_yaw_mdeg < -180000 || e.display_yaw_mdeg > 180000)
          return "display yaw out of [-180000, 180000] mdeg";
      }
      return std::nullopt;
    }
    std::optional<std::string> operator()(const GuideBoxUpdate& m) const {
      for (auto v : {m.cx_ppm, m.cy_ppm, m.w_ppm, m.h_ppm}) {
        if (v > kUnitScale) return "guide box coordinate above 1.0";
      }
      if (m.w_ppm == 0 || m.h_ppm == 0) return "guide box with zero extent";
      return std::nullopt;
    }
    std::optional<std::string> operator()(const CountdownPayload& m) const {
      if (m.remaining_ms < 0 || m.remaining_ms > kCountdownWindowMs)
        return "remaining_ms " + std::to_string(m.remaining_ms) + " out of [0, 5000]";
      if (m.mode != CaptureMode::Photo && m.mode != CaptureMode::Video) return "unknown capture mode";
      if (m.mode == CaptureMode::Photo && m.video_duration_ms != 0)
        return "photo countdown with nonzero video duration";
      return std::nullopt;
    }
    std::optional<std::string> operator()(const CaptureAck&) const { return std::nullopt; }
    std::optional<std::string> operator()(const Heartbeat&) const { return std::nullopt; }
  };
  return std::visit(Visitor{}, payload);
}

void write_payload(Writer& w, const Payload& payload) {
  struct Visitor {
    Writer& w;
    void operator()(const JoinRequest& m) const {
      w.u64(m.swarm_id);
      w.u8(m.attempt);
    }
    void operator()(const JoinAck& m) const {
      w.u64(m.swarm_id);
      w.u32(m.member);
    }
    void operator()(const MemberUpdate& m) const {
      w.u16(m.epoch);
      for (auto id : m.members) w.u32(id);
    }
    void operator()(const OrientationReport& m) const { w.i32(m.yaw_vs_north_mdeg); }
    void operator()(const OrientationBroadcast& m) const {
      w.u16(m.round);
      w.u8(m.chunk);
      w.u8(m.chunk_count);
      for (const auto& e : m.entries) {
        w.u32(e.device);
        w.i32(e.display_yaw_mdeg);
      }
    }
    void operator()(const GuideBoxUpdate& m) const {
      w.u32(m.origin);
      w.u32(m.revision);
      w.u32(m.cx_ppm);
      w.u32(m.cy_ppm);
      w.u32(m.w_ppm);
      w.u32(m.h_ppm);
    }
    void operator()(const CountdownPayload& m) const {
      w.u32(m.capture_id);
      w.i32(m.remaining_ms);
      w.u8(static_cast<std::uint8_t>(m.mode));
      w.u32(m.video_duration_ms);
    }
    void operator()(const CaptureAck& m) const {
      w.u32(m.capture_id);
      w.u16(m.packets_received);
      w.i64(m.fired_at_local_us);
    }
    void operator()(const Heartbeat&) const {}
  };
  std::visit(Visitor{w}, payload);
}

void expect_exact(const Reader& r, std::size_t n) {
  if (r.remaining() != n) throw Error(ErrorCode::Frame, "payload length does not match its kind");
}

Payload read_payload(MessageKind kind, Reader& r) {
  switch (kind) {
    case MessageKind::JoinRequest: {
      expect_exact(r, 9);
      JoinRequest m;
      m.swarm_id = r.u64();
      m.attempt = r.u8();
      return m;
    }
    case MessageKind::JoinAck: {
      expect_exact(r, 12);
      JoinAck m;
      m.swarm_id = r.u64();
      m.member = r.u32();
      return m;
    }
    case MessageKind::MemberUpdate: {
      if (r.remaining() < 2 || (r.remaining() - 2) % 4 != 0)
        throw Error(ErrorCode::Frame, "member update length is not 2 + 4n");
      MemberUpdate m;
      m.epoch = r.u16();
      while (r.remaining() > 0) m.members.push_back(r.u32());
      return m;
    }
    case MessageKind::OrientationReport: {
      expect_exact(r, 4);
      return OrientationReport{r.i32()};
    }
    case MessageKind::OrientationBroadcast: {
      if (r.remaining() < 4 || (r.remaining() - 4) % 8 != 0)
        throw Error(ErrorCode::Frame, "orientation broadcast length is not 4 + 8n");
      OrientationBroadcast m;
      m.round = r.u16();
      m.chunk = r.u8();
      m.chunk_count = r.u8();
      while (r.remaining() > 0) {
        YawEntry e;
        e.device = r.u32();
        e.display_yaw_mdeg = r.i32();
        m.entries.push_back(e);
      }
      return m;
    }
    case MessageKind::GuideBoxUpdate: {
      expect_exact(r, 24);
      GuideBoxUpdate m;
      m.origin = r.u32();
      m.revision = r.u32();
      m.cx_ppm = r.u32();
      m.cy_ppm = r.u32();
      m.w_ppm = r.u32();
      m.h_ppm = r.u32();
      return m;
    }
    case MessageKind::CountdownSignal: {
      expect_exact(r, 13);
      CountdownPayload m;
      m.capture_id = r.u32();
      m.remaining_ms = r.i32();
      m.mode = static_cast<CaptureMode>(r.u8());
      m.video_duration_ms = r.u32();
      return m;
    }
    case MessageKind::CaptureAck: {
      expect_exact(r, 14);
      CaptureAck m;
      m.capture_id = r.u32();
      m.packets_received = r.u16();
      m.fired_at_local_us = r.i64();
      return m;
    }
    case MessageKind::Heartbeat:
      expect_exact(r, 0);
      return Heartbeat{};
  }
  throw Error(ErrorCode::UnknownKind, "unknown message kind");
}

}  // namespace

std::string_view to_string(MessageKind kind) {
  switch (kind) {
    case MessageKind::JoinRequest: return "JoinRequest";
    case MessageKind::JoinAck: return "JoinAck";
    case MessageKind::MemberUpdate: return "MemberUpdate";
    case MessageKind::OrientationReport: return "OrientationReport";
    case MessageKind::OrientationBroadcast: return "OrientationBroadcast";
    case MessageKind::GuideBoxUpdate: return "GuideBoxUpdate";
    case MessageKind::CountdownSignal: return "CountdownSignal";
    case MessageKind::CaptureAck: return "CaptureAck";
    case MessageKind::Heartbeat: return "Heartbeat";
  }
  return "?";
}

std::string_view to_string(CaptureMode mode) {
  return mode == CaptureMode::Video ? "video" : "photo";
}

Bytes encode_message(const Message& msg) {
  if (auto why = range_violation(msg.payload)) throw Error(ErrorCode::Encode, *why);

  Writer body;
  write_payload(body, msg.payload);
  const auto& payload = body.bytes();

  Writer w;
  for (auto b : kMagic) w.u8(b);
  w.u8(kWireVersion);
  w.u8(static_cast<std::uint8_t>(msg.kind()));
  w.u16(static_cast<std::uint16_t>(payload.size()));
  w.u32(msg.sender);
  auto& out = w.bytes();
  out.insert(out.end(), payload.begin(), payload.end());
  return std::move(out);
}

Message decode_message(std::span<const std::uint8_t> bytes) {
  const auto magic_len = std::min(bytes.size(), kMagic.size());
  if (!std::equal(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(magic_len), kMagic.begin()))
    throw Error(ErrorCode::Frame, "bad magic");
  if (bytes.size() < kHeaderSize) throw Error(ErrorCode::Truncated, "frame shorter than header");
  if (bytes[4] != kWireVersion) throw Error(ErrorCode::Frame, "unsupported wire version");

  const std::uint8_t kind_byte = bytes[5];
  if (kind_byte < 1 || kind_byte > static_cast<std::uint8_t>(MessageKind::Heartbeat))
    throw Error(ErrorCode::UnknownKind, "unknown message kind " + std::to_string(kind_byte));
  const auto kind = static_cast<MessageKind>(kind_byte);

  const std::size_t payload_len = (static_cast<std::size_t>(bytes[6]) << 8) | bytes[7];
  const std::size_t total = kHeaderSize + kSenderSize + payload_len;
  if (bytes.size() < total) throw Error(ErrorCode::Truncated, "frame shorter than declared length");
  if (bytes.size() > total) throw Error(ErrorCode::Frame, "trailing bytes after payload");

  Reader sender_reader(bytes.subspan(kHeaderSize, kSenderSize));
  Message msg;
  msg.sender = sender_reader.u32();
  Reader r(bytes.subspan(kHeaderSize + kSenderSize, payload_len));
  msg.payload = read_payload(kind, r);
  if (auto why = range_violation(msg.payload)) throw Error(ErrorCode::Frame, *why);
  return msg;
}

std::string describe(const Message& msg) {
  std::ostringstream os;
  os << to_string(msg.kind());
  struct Visitor {
    std::ostringstream& os;
    void operator()(const JoinRequest& m) const { os << " attempt=" << int(m.attempt); }
    void operator()(const JoinAck& m) const { os << " member=" << m.member; }
    void operator()(const MemberUpdate& m) const {
      os << " epoch=" << m.epoch << " n=" << m.members.size();
    }
    void operator()(const OrientationReport& m) const { os << " yaw_mdeg=" << m.yaw_vs_north_mdeg; }
    void operator()(const OrientationBroadcast& m) const {
      os << " round=" << m.round << " chunk=" << int(m.chunk) << "/" << int(m.chunk_count);
    }
    void operator()(const GuideBoxUpdate& m) const {
      os << " origin=" << m.origin << " rev=" << m.revision;
    }
    void operator()(const CountdownPayload& m) const {
      os << " capture=" << m.capture_id << " remaining_ms=" << m.remaining_ms;
    }
    void operator()(const CaptureAck& m) const {
      os << " capture=" << m.capture_id << " packets=" << m.packets_received;
    }
    void operator()(const Heartbeat&) const {}
  };
  std::visit(Visitor{os}, msg.payload);
  return os.str();
}

// ---------------------------------------------------------------------------

namespace {

constexpr std::string_view kQrPrefix = "camswarm://";

template <typename T>
std::optional<T> parse_decimal(std::string_view s) {
  if (s.empty() || (s.size() > 1 && s[0] == '0')) return std::nullopt;
  T value{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

Endpoint parse_endpoint(std::string_view s) {
  auto fail = [&] {
    return QrParseError(QrFault::MalformedAddress, "malformed host address '" + std::string(s) + "'");
  };
  const auto colon = s.rfind(':');
  if (colon == std::string_view::npos) throw fail();
  Endpoint ep;
  std::string_view addr = s.substr(0, colon);
  for (int i = 0; i < 4; ++i) {
    const auto dot = addr.find('.');
    const bool last = i == 3;
    if (last != (dot == std::string_view::npos)) throw fail();
    auto octet = parse_decimal<unsigned>(addr.substr(0, dot));
    if (!octet || *octet > 255) throw fail();
    ep.address.octets[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(*octet);
    if (!last) addr.remove_prefix(dot + 1);
  }
  auto port = parse_decimal<unsigned>(s.substr(colon + 1));
  if (!port || *port == 0 || *port > 65535) throw fail();
  ep.port = static_cast<std::uint16_t>(*port);
  return ep;
}

std::uint64_t parse_swarm_id(std::string_view s) {
  auto fail = [&] {
    return QrParseError(QrFault::MalformedSwarm, "swarm id must be 16 nonzero hex digits");
  };
  if (s.size() != 16) throw fail();
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 16);
  if (ec != std::errc() || ptr != s.data() + s.size() || v == 0) throw fail();
  return v;
}

}  // namespace

std::string_view to_string(QrFault fault) {
  switch (fault) {
    case QrFault::Scheme: return "scheme";
    case QrFault::Version: return "version";
    case QrFault::MissingHost: return "missing_host";
    case QrFault::MissingSwarm: return "missing_swarm";
    case QrFault::MalformedAddress: return "malformed_address";
    case QrFault::MalformedSwarm: return "malformed_swarm";
  }
  return "?";
}

std::string Ipv4::to_string() const {
  return std::to_string(octets[0]) + "." + std::to_string(octets[1]) + "." +
         std::to_string(octets[2]) + "." + std::to_string(octets[3]);
}

std::string encode_qr(const QrPayload& payload) {
  if (payload.version != 1) throw Error(ErrorCode::Validation, "only QR payload version 1 is defined");
  if (payload.host.port == 0) throw Error(ErrorCode::Validation, "port must be nonzero");
  if (payload.swarm_id == 0) throw Error(ErrorCode::Validation, "swarm id must be nonzero");
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(payload.swarm_id));
  return std::string(kQrPrefix) + "v1?host=" + payload.host.address.to_string() + ":" +
         std::to_string(payload.host.port) + "&swarm=" + hex;
}

QrPayload decode_qr(std::string_view text) {
  if (!text.starts_with(kQrPrefix))
    throw QrParseError(QrFault::Scheme, "not a camswarm payload: '" + std::string(text) + "'");
  text.remove_prefix(kQrPrefix.size());

  const auto q = text.find('?');
  const std::string_view version = text.substr(0, q);
  if (version != "v1") throw QrParseError(QrFault::Version, "unsupported payload version '" + std::string(version) + "'");

  std::optional<std::string_view> host, swarm;
  std::string_view query = q == std::string_view::npos ? std::string_view{} : text.substr(q + 1);
  while (!query.empty()) {
    const auto amp = query.find('&');
    const std::string_view pair = query.substr(0, amp);
    query = amp == std::string_view::npos ? std::string_view{} : query.substr(amp + 1);
    const auto eq = pair.find('=');
    const std::string_view key = pair.substr(0, eq);
    const std::string_view value = eq == std::string_view::npos ? std::string_view{} : pair.substr(eq + 1);
    if (key == "host") {
      if (host) throw QrParseError(QrFault::MalformedAddress, "duplicate host parameter");
      host = value;
    } else if (key == "swarm") {
      if (swarm) throw QrParseError(QrFault::MalformedSwarm, "duplicate swarm parameter");
      swarm = value;
    }
  }
  if (!host) throw QrParseError(QrFault::MissingHost, "payload has no host parameter");
  if (!swarm) throw QrParseError(QrFault::MissingSwarm, "payload has no swarm parameter");

  QrPayload out;
  out.version = 1;
  out.host = parse_endpoint(*host);
  out.swarm_id = parse_swarm_id(*swarm);
  return out;
}

}  // namespace camswarm::protocol
