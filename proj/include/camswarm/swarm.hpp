#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "camswarm/geometry.hpp"
#include "camswarm/netsim.hpp"
#include "camswarm/protocol.hpp"
#include "camswarm/sync.hpp"

namespace camswarm::swarm {

using netsim::SimTime;

enum class Role { None, Host, Member };
enum class Phase { Idle, Joining, Positioning, Armed, Capturing, Done };

std::string_view to_string(Role role);
std::string_view to_string(Phase phase);

struct SwarmConfig {
  SimTime join_retry_interval = netsim::from_ms(500);
  int join_attempts = 5;
  SimTime orientation_period = netsim::from_ms(100);
  SimTime heartbeat_period = netsim::from_ms(1000);
  SimTime host_tick = netsim::from_ms(100);
  SimTime eviction_after = netsim::from_ms(3000);
  int guide_rebroadcast_ticks = 10;
  SimTime guide_retry_interval = netsim::from_ms(500);
  int guide_attempts = 5;
  std::size_t max_members = protocol::kMaxMembers;
};

enum class TimerKind : std::uint8_t {
  JoinRetry = 1,
  OrientationTick,
  Heartbeat,
  HostTick,
  GuideRetry,
  CountdownSend,
  CaptureFire,
  CaptureEnd,
};

std::string_view to_string(TimerKind kind);

struct Outgoing {
  DeviceId to = 0;  // netsim::kBroadcast for everyone
  protocol::Message message;
};

struct TimerRequest {
  SimTime at_local = 0;
  TimerKind kind = TimerKind::HostTick;
  std::uint32_t arg = 0;
};

struct Note {
  std::string event;
  std::string detail;
};

/// What a node wants done in response to an input. Timer times are on the
/// node's own clock.
struct Effects {
  std::vector<Outgoing> sends;
  std::vector<TimerRequest> timers;
  std::vector<Note> notes;

  void send(DeviceId to, protocol::Payload payload, DeviceId self);
  void timer(SimTime at_local, TimerKind kind, std::uint32_t arg = 0) { timers.push_back({at_local, kind, arg}); }
  void note(std::string event, std::string detail = {}) { notes.push_back({std::move(event), std::move(detail)}); }
  void append(Effects&& other);
};

/// One row of the compass table: a device and its display yaw in degrees.
struct CompassEntry {
  DeviceId device = 0;
  double display_yaw = 0;
  bool operator==(const CompassEntry&) const = default;
};

struct CompassBearing {
  DeviceId device = 0;
  double bearing = 0;  // clockwise from the top of the observer's compass
  bool operator==(const CompassBearing&) const = default;
};

struct CaptureRecord {
  std::uint32_t capture_id = 0;
  protocol::CaptureMode mode = protocol::CaptureMode::Photo;
  std::uint32_t video_duration_ms = 0;
  SimTime fired_at_local = 0;
  std::uint32_t packets_received = 0;
};

/// Resolves the host endpoint found in a QR code to a reachable device.
using AddressBook = std::function<std::optional<DeviceId>(const protocol::Endpoint&)>;

/// Per-device swarm state machine. It never touches the network directly;
/// every input returns the sends and timers the caller should carry out.
class SwarmNode {
 public:
  SwarmNode(DeviceId id, protocol::Endpoint address, SwarmConfig cfg = {});

  // Operations. Each throws Error(State) when called in the wrong phase.
  Effects host_swarm(SimTime now, std::uint64_t nonce);
  /// Throws QrParseError for a malformed code, leaving the node unchanged,
  /// and Error(JoinFailed) when the host address is unknown.
  Effects join_swarm(SimTime now, std::string_view qr_text, const AddressBook& book);
  /// Throws Error(Validation) for an invalid box.
  Effects set_guide_box(SimTime now, const geometry::GuideBox& box);
  /// Host only. Starts a postponed capture firing kCountdownWindowMs from now.
  Effects start_capture(SimTime now, protocol::CaptureMode mode, std::uint32_t video_duration_ms,
                        double rate_hz = sync::kDefaultRateHz);
  /// Local only: stops firing on this device. Other devices keep their own schedules.
  Effects cancel_capture(SimTime now);
  void set_sensor_yaw(double yaw_vs_north) { sensor_yaw_ = yaw_vs_north; }

  // Inputs. on_message throws Error(Protocol) for a join ack that names another swarm.
  Effects on_message(SimTime now, const protocol::Message& msg);
  Effects on_timer(SimTime now, TimerKind kind, std::uint32_t arg);

  // Queries.
  DeviceId id() const { return id_; }
  Role role() const { return role_; }
  Phase phase() const { return phase_; }
  std::uint64_t swarm_id() const { return swarm_id_; }
  std::optional<DeviceId> host() const { return host_; }
  /// QR text this device displays once it belongs to a swarm.
  std::optional<std::string> qr() const;
  /// Sorted; always contains this device once joined.
  std::vector<DeviceId> members() const;
  std::uint16_t member_epoch() const { return epoch_; }
  std::uint16_t compass_round() const { return applied_round_; }
  /// Last complete round of display yaws, sorted by device.
  const std::vector<CompassEntry>& compass_table() const { return table_; }
  std::optional<double> display_yaw(DeviceId device) const;
  /// Bearing of each other device on this device's compass. Empty until this
  /// device appears in the table.
  std::vector<CompassBearing> compass_bearings() const;
  const std::optional<geometry::GuideBox>& guide_box() const { return guide_; }
  std::uint32_t guide_revision() const { return guide_revision_; }
  std::optional<DeviceId> guide_origin() const { return guide_origin_; }
  double sensor_yaw() const { return sensor_yaw_; }
  const sync::CaptureSchedule& capture_schedule() const { return client_.schedule(); }
  const std::optional<sync::CaptureSession>& capture_session() const { return session_; }
  const std::vector<CaptureRecord>& captures() const { return captures_; }
  /// Host only: acks received per capture id.
  const std::map<std::uint32_t, std::map<DeviceId, protocol::CaptureAck>>& capture_acks() const { return acks_; }
  int join_attempts_made() const { return join_attempt_; }

 private:
  bool joined() const { return phase_ >= Phase::Positioning; }
  void require_joined(std::string_view op) const;
  void start_member_timers(SimTime now, Effects& fx);
  void host_tick(SimTime now, Effects& fx);
  void broadcast_members(Effects& fx);
  void broadcast_orientation(Effects& fx);
  void broadcast_guide(Effects& fx);
  void apply_round(std::uint16_t round, std::vector<protocol::YawEntry> entries, Effects& fx);
  void fire(SimTime now, Effects& fx);
  void admit(DeviceId device, SimTime now, Effects& fx);

  void on_join_request(SimTime now, DeviceId from, const protocol::JoinRequest& req, Effects& fx);
  void on_join_ack(SimTime now, DeviceId from, const protocol::JoinAck& ack, Effects& fx);
  void on_member_update(DeviceId from, const protocol::MemberUpdate& upd, Effects& fx);
  void on_report(SimTime now, DeviceId from, const protocol::OrientationReport& rep, Effects& fx);
  void on_orientation(DeviceId from, const protocol::OrientationBroadcast& b, Effects& fx);
  void on_guide(DeviceId from, const protocol::GuideBoxUpdate& g, Effects& fx);
  void on_countdown(SimTime now, DeviceId from, const protocol::CountdownPayload& p, Effects& fx);
  void on_capture_ack(DeviceId from, const protocol::CaptureAck& ack, Effects& fx);

  DeviceId id_;
  protocol::Endpoint address_;
  SwarmConfig cfg_;
  Role role_ = Role::None;
  Phase phase_ = Phase::Idle;
  std::uint64_t swarm_id_ = 0;
  std::optional<DeviceId> host_;
  std::optional<protocol::QrPayload> qr_;
  double sensor_yaw_ = 0;

  // Joining.
  int join_attempt_ = 0;
  std::uint32_t join_gen_ = 0;

  // Membership. The host keeps last-seen times; members mirror the host's list.
  std::set<DeviceId> members_;
  std::map<DeviceId, SimTime> last_seen_;
  std::set<DeviceId> evicted_;
  std::uint16_t epoch_ = 0;
  bool have_epoch_ = false;

  // Orientation. The host keeps the latest reported yaw per member.
  std::map<DeviceId, std::int32_t> reported_mdeg_;
  std::uint16_t round_counter_ = 0;
  std::uint16_t applied_round_ = 0;
  bool have_round_ = false;
  std::uint16_t pending_round_ = 0;
  std::map<std::uint8_t, std::vector<protocol::YawEntry>> pending_chunks_;
  std::uint8_t pending_chunk_count_ = 0;
  std::vector<CompassEntry> table_;
  std::uint64_t host_ticks_ = 0;

  // Guide box.
  std::optional<geometry::GuideBox> guide_;
  std::uint32_t guide_revision_ = 0;
  std::optional<DeviceId> guide_origin_;
  std::map<DeviceId, std::uint32_t> guide_request_seq_;  // host: last applied per origin
  std::uint32_t my_guide_seq_ = 0;
  std::optional<protocol::GuideBoxUpdate> guide_request_;
  int guide_attempt_ = 0;

  // Capture.
  std::uint32_t next_capture_id_ = 1;
  std::optional<sync::CaptureSession> session_;
  bool session_fired_ = false;
  sync::CountdownClient client_;
  std::uint32_t cancelled_capture_ = 0;
  std::uint32_t fire_gen_ = 0;
  std::vector<CaptureRecord> captures_;
  std::map<std::uint32_t, std::map<DeviceId, protocol::CaptureAck>> acks_;
};

/// Serial-number comparison for wrapping 16-bit counters.
constexpr bool newer16(std::uint16_t a, std::uint16_t b) { return static_cast<std::int16_t>(a - b) > 0; }

/// Degrees to the wire's millidegrees and back.
std::int32_t to_mdeg(double degrees);
double from_mdeg(std::int32_t mdeg);

/// Guide box to/from parts-per-million fields.
protocol::GuideBoxUpdate encode_guide(const geometry::GuideBox& box, DeviceId origin, std::uint32_t revision);
geometry::GuideBox decode_guide(const protocol::GuideBoxUpdate& g);

}  // namespace camswarm::swarm
