#include "camswarm/swarm.hpp"

#include <cmath>
#include <set>

#include "camswarm/swarm_sim.hpp"
#include "test_support.hpp"

using namespace camswarm;
using namespace camswarm::swarm;
using netsim::from_ms;

namespace {

netsim::NetworkModel model(double loss, std::uint64_t seed) {
  return netsim::NetworkModel{loss, netsim::UniformLatency{30, 200}, seed};
}

// Host 1 plus members 2..n, each joining via the previous device's QR code.
SwarmSim formed(int n, double loss = 0.0, std::uint64_t seed = 1) {
  SwarmSim sim(model(loss, seed));
  for (int i = 1; i <= n; ++i) sim.add_device(static_cast<DeviceId>(i), from_ms(37 * i - 100));
  sim.host(1, 77);
  sim.run_until(from_ms(50));
  for (int i = 2; i <= n; ++i) {
    const auto d = static_cast<DeviceId>(i);
    while (sim.node(d).phase() != Phase::Positioning) {
      if (sim.node(d).phase() == Phase::Idle) sim.join(d, sim.node(d - 1).qr() ? d - 1 : 1);
      sim.run_until(sim.now() + from_ms(600));
    }
  }
  sim.run_until(sim.now() + from_ms(1000));
  return sim;
}

protocol::Message from(DeviceId sender, protocol::Payload p) { return {sender, std::move(p)}; }

}  // namespace

TEST_CASE("hosting assigns a swarm id and a QR code pointing at the host") {
  SwarmNode n(4, protocol::Endpoint{{{10, 0, 0, 4}}, 7000});
  const auto fx = n.host_swarm(0, 99);
  CHECK(n.role() == Role::Host);
  CHECK(n.phase() == Phase::Positioning);
  CHECK(n.swarm_id() != 0);
  const auto qr = protocol::decode_qr(*n.qr());
  CHECK(qr.swarm_id == n.swarm_id());
  CHECK(qr.host.address.to_string() == "10.0.0.4");
  CHECK(n.members() == std::vector<DeviceId>{4});
  CHECK(n.display_yaw(4) == 0.0);
  CHECK_ERROR_CODE(n.host_swarm(0, 1), ErrorCode::State);
  CHECK(!fx.timers.empty());
}

TEST_CASE("swarm ids do not collide across 10^4 hosts") {
  std::set<std::uint64_t> ids;
  for (DeviceId d = 1; d <= 10000; ++d) {
    SwarmNode n(d, {});
    n.host_swarm(0, 12345);
    ids.insert(n.swarm_id());
  }
  CHECK(ids.size() == 10000);
}

TEST_CASE("malformed QR leaves the node idle") {
  SwarmNode n(2, {});
  CHECK_ERROR_CODE(n.join_swarm(0, "camswarm://v1?host=1.2.3:7000&swarm=00000000deadbeef", {}), ErrorCode::Parse);
  CHECK(n.phase() == Phase::Idle);
  CHECK_ERROR_CODE(n.join_swarm(0, "camswarm://v1?host=1.2.3.4:7000&swarm=00000000deadbeef", {}),
                   ErrorCode::JoinFailed);
  CHECK(n.phase() == Phase::Idle);
}

TEST_CASE("join ack for a different swarm is a protocol error") {
  SwarmNode n(2, {});
  const AddressBook book = [](const protocol::Endpoint&) { return std::optional<DeviceId>(1); };
  n.join_swarm(0, "camswarm://v1?host=10.0.0.1:7000&swarm=00000000deadbeef", book);
  CHECK(n.phase() == Phase::Joining);
  CHECK_ERROR_CODE(n.on_message(1000, from(1, protocol::JoinAck{0xfeed, 2})), ErrorCode::Protocol);
  n.on_message(1000, from(1, protocol::JoinAck{0xdeadbeef, 2}));
  CHECK(n.phase() == Phase::Positioning);
  CHECK(n.role() == Role::Member);
  CHECK(n.members() == std::vector<DeviceId>{1, 2});
}

TEST_CASE("join retransmits five times then fails") {
  SwarmNode n(2, {});
  const AddressBook book = [](const protocol::Endpoint&) { return std::optional<DeviceId>(1); };
  auto fx = n.join_swarm(0, "camswarm://v1?host=10.0.0.1:7000&swarm=00000000deadbeef", book);
  int requests = static_cast<int>(fx.sends.size());
  while (!fx.timers.empty()) {
    const auto t = fx.timers.front();
    fx = n.on_timer(t.at_local, t.kind, t.arg);
    requests += static_cast<int>(fx.sends.size());
  }
  CHECK(requests == 5);
  CHECK(n.phase() == Phase::Idle);
  CHECK(n.role() == Role::None);
  CHECK(!n.qr());
}

TEST_CASE("operations in the wrong phase") {
  SwarmNode n(2, {});
  CHECK_ERROR_CODE(n.set_guide_box(0, {}), ErrorCode::State);
  CHECK_ERROR_CODE(n.start_capture(0, protocol::CaptureMode::Photo, 0), ErrorCode::State);
  n.host_swarm(0, 1);
  CHECK_ERROR_CODE(n.set_guide_box(0, geometry::GuideBox{0.9, 0.5, 0.4, 0.4}), ErrorCode::Validation);
  n.start_capture(0, protocol::CaptureMode::Photo, 0);
  CHECK(n.phase() == Phase::Armed);
  CHECK_ERROR_CODE(n.start_capture(0, protocol::CaptureMode::Photo, 0), ErrorCode::State);
}

TEST_CASE("membership converges on every device") {
  auto sim = formed(5);
  const auto expected = std::vector<DeviceId>{1, 2, 3, 4, 5};
  for (DeviceId d = 1; d <= 5; ++d) {
    CHECK(sim.node(d).members() == expected);
    CHECK(sim.node(d).swarm_id() == sim.node(1).swarm_id());
    CHECK(sim.node(d).qr() == sim.node(1).qr());
  }
  int hosts = 0;
  for (DeviceId d = 1; d <= 5; ++d) hosts += sim.node(d).role() == Role::Host;
  CHECK(hosts == 1);
  CHECK(sim.errors().empty());
}

TEST_CASE("binomial oracle: join failure rate at half loss") {
  // A join fails only if all five request/ack round trips lose a packet:
  // (1 - 0.5 * 0.5)^5 = 0.2373.
  const int sims = 10000;
  int failed = 0;
  for (int s = 0; s < sims; ++s) {
    SwarmSim sim(model(0.5, derive_seed(2024, static_cast<std::uint64_t>(s))));
    sim.network().set_tracing(false);
    sim.add_device(1);
    sim.add_device(2);
    sim.host(1, static_cast<std::uint64_t>(s));
    sim.join(2, 1);
    sim.run_until(from_ms(3000));
    failed += sim.node(2).phase() == Phase::Idle;
  }
  const double p = std::pow(0.75, 5);
  const double rate = static_cast<double>(failed) / sims;
  CHECK(std::abs(rate - p) < 3 * std::sqrt(p * (1 - p) / sims));
}

TEST_CASE("compass: example yaws and table agreement") {
  auto sim = formed(3);
  sim.set_sensor([](DeviceId d, netsim::SimTime) { return d == 1 ? 30.0 : d == 2 ? 50.0 : 350.0; });
  sim.run_until(sim.now() + from_ms(1000));
  const auto& host = sim.node(1);
  CHECK(host.display_yaw(1) == 0.0);
  CHECK(host.display_yaw(2) == -20.0);
  CHECK(host.display_yaw(3) == 40.0);  // relative -40
  for (DeviceId d = 2; d <= 3; ++d) CHECK(sim.node(d).compass_table() == host.compass_table());
  const auto bearings = sim.node(2).compass_bearings();
  REQUIRE(bearings.size() == 2);
  CHECK(bearings[0].device == 1);
  CHECK(bearings[0].bearing == doctest::Approx(200));  // 180 + 0 - (-20)
}

TEST_CASE("property: compass pairs stay antisymmetric under changing yaws") {
  auto sim = formed(6, 0.2, 9);
  sim.set_sensor([](DeviceId d, netsim::SimTime t) {
    return std::fmod(40.0 * d + 0.01 * static_cast<double>(t) / 1000.0, 360.0);
  });
  int checks = 0;
  sim.set_observer([&](DeviceId, const SwarmNode& n, netsim::SimTime) {
    const auto& table = n.compass_table();
    for (const auto& a : table) {
      for (const auto& b : table) {
        const double ab = geometry::compass_placement(a.display_yaw, b.display_yaw);
        const double ba = geometry::compass_placement(b.display_yaw, a.display_yaw);
        CHECK(geometry::circular_distance(ab + ba, 0) < 1e-9);
        ++checks;
      }
    }
    for (const auto& e : table) {
      if (sim.node(1).role() == Role::Host && e.device == 1) CHECK(e.display_yaw == 0.0);
    }
  });
  sim.run_until(sim.now() + from_ms(2000));
  CHECK(checks > 100);
}

TEST_CASE("orientation rounds reassemble from chunks and drop stale rounds") {
  SwarmNode n(2, {});
  const AddressBook book = [](const protocol::Endpoint&) { return std::optional<DeviceId>(1); };
  n.join_swarm(0, "camswarm://v1?host=10.0.0.1:7000&swarm=00000000deadbeef", book);
  n.on_message(10, from(1, protocol::JoinAck{0xdeadbeef, 2}));
  protocol::OrientationBroadcast c0{5, 0, 2, {{1, 0}, {2, -20000}}};
  protocol::OrientationBroadcast c1{5, 1, 2, {{3, 15000}}};
  n.on_message(20, from(1, c1));
  CHECK(n.compass_table().empty());
  n.on_message(30, from(1, c0));
  REQUIRE(n.compass_table().size() == 3);
  CHECK(n.compass_round() == 5);
  CHECK(n.display_yaw(3) == 15.0);
  protocol::OrientationBroadcast old{4, 0, 1, {{1, 0}}};
  n.on_message(40, from(1, old));
  CHECK(n.compass_round() == 5);
  protocol::OrientationBroadcast wrapped{5 + 0x8000 - 1, 0, 1, {{1, 0}}};
  n.on_message(50, from(1, wrapped));
  CHECK(n.compass_round() == static_cast<std::uint16_t>(5 + 0x8000 - 1));
  protocol::OrientationBroadcast forged{9, 0, 1, {{1, 0}}};
  n.on_message(60, from(3, forged));
  CHECK(n.compass_round() != 9);
}

TEST_CASE("twelve members split the table over two frames") {
  auto sim = formed(12);
  sim.set_sensor([](DeviceId d, netsim::SimTime) { return 10.0 * d; });
  sim.run_until(sim.now() + from_ms(1000));
  CHECK(sim.node(1).members().size() == 12);
  CHECK(sim.node(12).compass_table().size() == 12);
  CHECK(sim.node(12).display_yaw(12) == -110.0);
  sim.add_device(13);
  sim.join(13, 1);
  sim.run_until(sim.now() + from_ms(3000));
  CHECK(sim.node(13).phase() == Phase::Idle);
  CHECK(sim.node(1).members().size() == 12);
}

TEST_CASE("silent members are evicted and others learn of it") {
  auto sim = formed(4);
  sim.set_online(3, false);
  sim.run_until(sim.now() + from_ms(4000));
  CHECK(sim.node(1).members() == std::vector<DeviceId>{1, 2, 4});
  CHECK(sim.node(2).members() == std::vector<DeviceId>{1, 2, 4});
  CHECK_FALSE(sim.node(2).display_yaw(3).has_value());
  sim.set_online(3, true);
  sim.run_until(sim.now() + from_ms(1000));
  CHECK(sim.node(4).members() == std::vector<DeviceId>{1, 2, 3, 4});
}

TEST_CASE("guide box: last writer at the host wins everywhere") {
  auto sim = formed(4, 0.2, 3);
  const geometry::GuideBox a{0.5, 0.5, 0.3, 0.6};
  const geometry::GuideBox b{0.4, 0.55, 0.25, 0.5};
  sim.set_guide_box(2, a);
  sim.run_until(sim.now() + from_ms(1500));
  sim.set_guide_box(3, b);
  sim.run_until(sim.now() + from_ms(3000));
  for (DeviceId d = 1; d <= 4; ++d) {
    REQUIRE(sim.node(d).guide_box());
    CHECK(sim.node(d).guide_box()->cx == doctest::Approx(0.4));
    CHECK(sim.node(d).guide_origin() == DeviceId{3});
    CHECK(sim.node(d).guide_revision() == sim.node(1).guide_revision());
  }
}

TEST_CASE("capture: every member fires after the countdown") {
  auto sim = formed(5);
  const auto id = sim.start_capture(1, protocol::CaptureMode::Photo, 0);
  sim.run_until(sim.now() + from_ms(6000));
  const auto t_fire = sim.capture_starts().back().t_fire_global;
  int clients = 0;
  for (const auto& f : sim.fires()) {
    CHECK(f.capture_id == id);
    if (f.host) {
      CHECK(f.at_global == t_fire);
      continue;
    }
    ++clients;
    CHECK(f.at_global - t_fire >= from_ms(30));
    CHECK(f.at_global - t_fire <= from_ms(200));
  }
  CHECK(clients == 4);
  for (DeviceId d = 1; d <= 5; ++d) CHECK(sim.node(d).phase() == Phase::Done);
  CHECK(sim.node(1).capture_acks().at(id).size() == 4);
}

TEST_CASE("video capture records until the duration elapses") {
  auto sim = formed(3);
  sim.start_capture(1, protocol::CaptureMode::Video, 2000);
  sim.run_until(sim.now() + from_ms(5500));
  CHECK(sim.node(2).phase() == Phase::Capturing);
  sim.run_until(sim.now() + from_ms(2000));
  CHECK(sim.node(2).phase() == Phase::Done);
}

TEST_CASE("late joiner adopts an in-flight countdown") {
  auto sim = formed(3);
  sim.add_device(9, from_ms(250));
  sim.start_capture(1, protocol::CaptureMode::Photo, 0);
  sim.run_until(sim.now() + from_ms(2000));
  sim.join(9, 2);
  sim.run_until(sim.now() + from_ms(4000));
  bool fired = false;
  for (const auto& f : sim.fires()) fired |= f.device == 9;
  CHECK(fired);
}

TEST_CASE("cancel is local to the cancelling device") {
  auto sim = formed(3);
  sim.start_capture(1, protocol::CaptureMode::Photo, 0);
  sim.run_until(sim.now() + from_ms(1000));
  sim.cancel_capture(2);
  CHECK(sim.node(2).phase() == Phase::Positioning);
  CHECK_ERROR_CODE(sim.cancel_capture(2), ErrorCode::State);
  sim.run_until(sim.now() + from_ms(5000));
  std::set<DeviceId> fired;
  for (const auto& f : sim.fires()) fired.insert(f.device);
  CHECK(fired == std::set<DeviceId>{1, 3});
}

TEST_CASE("same seed gives the same trace") {
  auto a = formed(4, 0.3, 42);
  auto b = formed(4, 0.3, 42);
  CHECK(netsim::format_trace(a.network().trace()) == netsim::format_trace(b.network().trace()));
  auto c = formed(4, 0.3, 43);
  CHECK(netsim::format_trace(a.network().trace()) != netsim::format_trace(c.network().trace()));
}
