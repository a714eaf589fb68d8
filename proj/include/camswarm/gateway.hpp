#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "camswarm/playback.hpp"
#include "camswarm/scenario.hpp"

namespace camswarm::gateway {

using json = nlohmann::json;
using netsim::SimTime;

/// A scenario running under external control. Every change to the state
/// document is published as an RFC 6902 patch with a sequence number; applying
/// the patches in order to a snapshot reproduces any later snapshot.
class Session {
 public:
  explicit Session(scenario::Scenario sc, std::optional<std::uint64_t> seed = std::nullopt);

  /// {"type":"snapshot","seq":n,"state":{...}}
  json snapshot() const;
  std::uint64_t seq() const { return seq_; }
  const json& state() const { return state_; }

  /// Runs the simulation (scenario actions included) up to `t_global`.
  /// Returns the patch event it produced, if the state changed.
  std::optional<json> advance_to(SimTime t_global);
  SimTime now() const { return runner_.world().now(); }

  /// Registers an observer; the first one registered holds command authority.
  std::string connect();
  const std::optional<std::string>& authority() const { return authority_; }

  struct Reply {
    json body;
    std::optional<json> event;  // patch produced by the command
  };
  /// Applies a command document {"cmd": name, ...}. Never throws; failures
  /// come back as {"ok":false,"code":...,"message":...}.
  Reply command(const json& cmd);

  scenario::Runner& runner() { return runner_; }
  const std::optional<playback::EditTimeline>& timeline() const { return timeline_; }

 private:
  json build_state() const;
  std::optional<json> publish();
  json dispatch(const std::string& name, const json& cmd);
  DeviceId host_or_throw() const;

  scenario::Runner runner_;
  std::optional<playback::EditTimeline> timeline_;
  json state_;
  std::uint64_t seq_ = 0;
  std::uint64_t next_client_ = 1;
  std::optional<std::string> authority_;
};

/// Event documents serialized for the wire, one per line of the stream.
std::string to_wire(const json& event);

struct ServerOptions {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks a free port
  double pace = 1.0;  // simulated seconds per wall second
  int tick_ms = 50;   // wall-clock pacing step
};

/// HTTP front end: GET /api/snapshot, GET /api/events (server-sent events,
/// snapshot first), POST /api/command. One loop thread owns the session;
/// handlers only enqueue commands and copy published event documents.
class Server {
 public:
  Server(Session session, ServerOptions opts);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts serving. Throws Error(Sim) if the port cannot be bound.
  void start();
  void stop();
  int port() const { return port_; }
  /// Blocks until stop() is called from another thread or the loop fails.
  void wait();
  /// True once the simulation loop has ended, by stop() or by a runtime error.
  bool stopped() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
};

}  // namespace camswarm::gateway
