#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "camswarm/error.hpp"

namespace camswarm::protocol {

// Frame layout (all integers big-endian):
//   magic "CSWM" | version 0x01 | kind u8 | payload_len u16 | sender u32 | payload
// payload_len counts the payload bytes only, not the sender field.
inline constexpr std::array<std::uint8_t, 4> kMagic{0x43, 0x53, 0x57, 0x4D};
inline constexpr std::uint8_t kWireVersion = 0x01;
inline constexpr std::size_t kHeaderSize = 8;
inline constexpr std::size_t kSenderSize = 4;
inline constexpr std::size_t kMaxFrameSize = 64;

inline constexpr std::size_t kMaxMembers = 12;
inline constexpr std::size_t kMaxYawEntriesPerFrame = 6;
inline constexpr std::int32_t kCountdownWindowMs = 5000;
inline constexpr std::uint32_t kUnitScale = 1'000'000;  // normalized coords in ppm

enum class MessageKind : std::uint8_t {
  JoinRequest = 1,
  JoinAck = 2,
  MemberUpdate = 3,
  OrientationReport = 4,
  OrientationBroadcast = 5,
  GuideBoxUpdate = 6,
  CountdownSignal = 7,
  CaptureAck = 8,
  Heartbeat = 9,
};

std::string_view to_string(MessageKind kind);

enum class CaptureMode : std::uint8_t { Photo = 0, Video = 1 };

std::string_view to_string(CaptureMode mode);

struct JoinRequest {
  std::uint64_t swarm_id = 0;
  std::uint8_t attempt = 1;
  bool operator==(const JoinRequest&) const = default;
};

struct JoinAck {
  std::uint64_t swarm_id = 0;
  DeviceId member = 0;
  bool operator==(const JoinAck&) const = default;
};

struct MemberUpdate {
  std::uint16_t epoch = 0;
  std::vector<DeviceId> members;  // at most kMaxMembers
  bool operator==(const MemberUpdate&) const = default;
};

struct OrientationReport {
  std::int32_t yaw_vs_north_mdeg = 0;  // [0, 360000)
  bool operator==(const OrientationReport&) const = default;
};

struct YawEntry {
  DeviceId device = 0;
  std::int32_t display_yaw_mdeg = 0;  // [-180000, 180000]
  bool operator==(const YawEntry&) const = default;
};

/// One round of display yaws is split across `chunk_count` frames so each
/// stays under kMaxFrameSize.
struct OrientationBroadcast {
  std::uint16_t round = 0;
  std::uint8_t chunk = 0;
  std::uint8_t chunk_count = 1;
  std::vector<YawEntry> entries;  // at most kMaxYawEntriesPerFrame
  bool operator==(const OrientationBroadcast&) const = default;
};

struct GuideBoxUpdate {
  DeviceId origin = 0;
  std::uint32_t revision = 0;  // host-assigned; a member request carries its own sequence number
  std::uint32_t cx_ppm = 0;
  std::uint32_t cy_ppm = 0;
  std::uint32_t w_ppm = 0;
  std::uint32_t h_ppm = 0;
  bool operator==(const GuideBoxUpdate&) const = default;
};

struct CountdownPayload {
  std::uint32_t capture_id = 0;
  std::int32_t remaining_ms = 0;  // [0, 5000]
  CaptureMode mode = CaptureMode::Photo;
  std::uint32_t video_duration_ms = 0;  // 0 for Photo
  bool operator==(const CountdownPayload&) const = default;
};

struct CaptureAck {
  std::uint32_t capture_id = 0;
  std::uint16_t packets_received = 0;
  std::int64_t fired_at_local_us = 0;
  bool operator==(const CaptureAck&) const = default;
};

struct Heartbeat {
  bool operator==(const Heartbeat&) const = default;
};

// Alternative order mirrors MessageKind (index + 1).
using Payload = std::variant<JoinRequest, JoinAck, MemberUpdate, OrientationReport,
                             OrientationBroadcast, GuideBoxUpdate, CountdownPayload,
                             CaptureAck, Heartbeat>;

struct Message {
  DeviceId sender = 0;
  Payload payload = Heartbeat{};

  MessageKind kind() const { return static_cast<MessageKind>(payload.index() + 1); }

  template <typename T>
  const T* as() const { return std::get_if<T>(&payload); }

  bool operator==(const Message&) const = default;
};

using Bytes = std::vector<std::uint8_t>;

/// Throws Error(Encode) when a payload field is out of its declared range.
Bytes encode_message(const Message& msg);

/// Throws Error(Frame | UnknownKind | Truncated).
Message decode_message(std::span<const std::uint8_t> bytes);

std::string describe(const Message& msg);

// ---------------------------------------------------------------------------
// QR join payload: camswarm://v1?host=<a.b.c.d>:<port>&swarm=<16 hex chars>

struct Ipv4 {
  std::array<std::uint8_t, 4> octets{};
  std::string to_string() const;
  bool operator==(const Ipv4&) const = default;
};

struct Endpoint {
  Ipv4 address;
  std::uint16_t port = 0;
  bool operator==(const Endpoint&) const = default;
};

struct QrPayload {
  std::uint8_t version = 1;
  Endpoint host;
  std::uint64_t swarm_id = 0;
  bool operator==(const QrPayload&) const = default;
};

enum class QrFault { Scheme, Version, MissingHost, MissingSwarm, MalformedAddress, MalformedSwarm };

std::string_view to_string(QrFault fault);

class QrParseError : public Error {
 public:
  QrParseError(QrFault fault, const std::string& what)
      : Error(ErrorCode::Parse, what), fault_(fault) {}
  QrFault fault() const noexcept { return fault_; }

 private:
  QrFault fault_;
};

/// Throws Error(Validation) for port 0, swarm id 0 or an unsupported version.
std::string encode_qr(const QrPayload& payload);

/// Throws QrParseError.
QrPayload decode_qr(std::string_view text);

}  // namespace camswarm::protocol
