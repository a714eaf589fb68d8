#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "camswarm/netsim.hpp"
#include "camswarm/swarm.hpp"

namespace camswarm::swarm {

struct FireRecord {
  DeviceId device = 0;
  std::uint32_t capture_id = 0;
  SimTime at_global = 0;
  bool host = false;
};

struct CaptureStart {
  DeviceId host = 0;
  std::uint32_t capture_id = 0;
  SimTime t_fire_global = 0;
};

/// Runs a set of SwarmNodes over a simulated network. Operations act at the
/// current simulation time; node errors raised while handling an event are
/// recorded in the trace instead of aborting the run.
class SwarmSim {
 public:
  using Sensor = std::function<double(DeviceId, SimTime)>;
  using Observer = std::function<void(DeviceId, const SwarmNode&, SimTime)>;

  explicit SwarmSim(netsim::NetworkModel model, SwarmConfig cfg = {});

  SwarmNode& add_device(DeviceId id, SimTime clock_offset = 0);
  SwarmNode& node(DeviceId id);
  const SwarmNode& node(DeviceId id) const;
  bool has_device(DeviceId id) const { return nodes_.contains(id); }
  std::vector<DeviceId> devices() const;

  netsim::Network& network() { return net_; }
  const netsim::Network& network() const { return net_; }
  SimTime now() const { return net_.now(); }

  void host(DeviceId id, std::uint64_t nonce);
  /// Scans the QR code shown on `via`. Throws Error(State) if it shows none.
  void join(DeviceId id, DeviceId via);
  void join_qr(DeviceId id, std::string_view qr_text);
  void set_guide_box(DeviceId id, const geometry::GuideBox& box);
  std::uint32_t start_capture(DeviceId host, protocol::CaptureMode mode, std::uint32_t video_duration_ms,
                              double rate_hz = sync::kDefaultRateHz);
  void cancel_capture(DeviceId id);
  void set_online(DeviceId id, bool online) { net_.set_online(id, online); }

  void run_until(SimTime t_global);

  /// Heading provider queried before each event a device handles.
  void set_sensor(Sensor sensor) { sensor_ = std::move(sensor); }
  /// Called after every event a device handles.
  void set_observer(Observer observer) { observer_ = std::move(observer); }

  const std::vector<FireRecord>& fires() const { return fires_; }
  const std::vector<CaptureStart>& capture_starts() const { return starts_; }
  const std::vector<std::string>& errors() const { return errors_; }

 private:
  void refresh_sensor(DeviceId id);
  void apply(DeviceId id, Effects&& fx);
  void handle(const netsim::Event& ev);

  netsim::Network net_;
  SwarmConfig cfg_;
  std::map<DeviceId, std::unique_ptr<SwarmNode>> nodes_;
  Sensor sensor_;
  Observer observer_;
  std::vector<FireRecord> fires_;
  std::vector<CaptureStart> starts_;
  std::vector<std::string> errors_;
};

}  // namespace camswarm::swarm
