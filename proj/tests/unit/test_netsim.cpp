#include "camswarm/netsim.hpp"

#include <cmath>

#include "test_support.hpp"

using namespace camswarm;
using namespace camswarm::netsim;

namespace {

protocol::Bytes heartbeat(DeviceId from) { return protocol::encode_message({from, protocol::Heartbeat{}}); }

Network three_devices(double loss, LatencyDist lat, std::uint64_t seed) {
  Network net(NetworkModel{loss, lat, seed});
  net.add_device(1);
  net.add_device(2, from_ms(15));
  net.add_device(3, from_ms(-40));
  return net;
}

std::string scripted_trace(std::uint64_t seed) {
  Network net = three_devices(0.3, UniformLatency{30, 200}, seed);
  for (int i = 0; i < 50; ++i) net.send(1, kBroadcast, heartbeat(1), from_ms(i * 10));
  net.schedule_timer(2, from_ms(100), 7);
  net.run_until(from_ms(10'000), [](const Event& ev, Network& n) {
    if (ev.kind == EventKind::Deliver && ev.device == 2 && n.now() < from_ms(1000)) {
      n.send(2, 1, heartbeat(2), n.now());
    }
  });
  return format_trace(net.trace());
}

}  // namespace

TEST_CASE("lossless broadcast reaches every other device exactly once") {
  Network net = three_devices(0.0, ConstantLatency{40}, 1);
  const auto out = net.send(1, kBroadcast, heartbeat(1), 0);
  REQUIRE(out.size() == 2);
  std::map<DeviceId, int> got;
  net.run_until(from_ms(1000), [&](const Event& ev, Network&) {
    CHECK(ev.kind == EventKind::Deliver);
    CHECK(ev.at == from_ms(40));
    ++got[ev.device];
  });
  CHECK(got == std::map<DeviceId, int>{{2, 1}, {3, 1}});
}

TEST_CASE("total loss delivers nothing") {
  Network net = three_devices(1.0, ConstantLatency{40}, 1);
  for (int i = 0; i < 100; ++i) net.send(1, kBroadcast, heartbeat(1), 0);
  int delivered = 0;
  net.run_until(from_ms(1000), [&](const Event&, Network&) { ++delivered; });
  CHECK(delivered == 0);
  CHECK(net.stats().dropped == 200);
}

TEST_CASE("binomial oracle: half loss over 10^4 packets") {
  // Delivered count ~ Binomial(10000, 0.5): mean 5000, sigma 50.
  Network net(NetworkModel{0.5, UniformLatency{30, 200}, 424242});
  net.add_device(1);
  net.add_device(2);
  net.set_tracing(false);
  int delivered = 0;
  for (int i = 0; i < 10000; ++i) {
    for (const auto& o : net.send(1, kBroadcast, heartbeat(1), 0)) delivered += o.delivered;
  }
  CHECK(std::abs(delivered - 5000) <= 150);
}

TEST_CASE("empty queue yields empty trace") {
  Network net = three_devices(0.0, ConstantLatency{1}, 1);
  CHECK(net.run_until(from_ms(5000), {}).empty());
}

TEST_CASE("same seed gives identical traces, different seed differs") {
  const auto a = scripted_trace(11);
  CHECK(a == scripted_trace(11));
  CHECK(a != scripted_trace(12));
  CHECK(!a.empty());
}

TEST_CASE("events at equal time pop in insertion order") {
  Network net = three_devices(0.0, ConstantLatency{0}, 1);
  net.schedule_timer(3, from_ms(5), 1);
  net.schedule_timer(2, from_ms(5), 2);
  net.schedule_timer(1, from_ms(5), 3);
  net.send(1, 2, heartbeat(1), from_ms(5));
  std::vector<std::uint64_t> order;
  net.run_until(from_ms(10), [&](const Event& ev, Network&) {
    order.push_back(ev.kind == EventKind::Timer ? ev.tag : 99);
  });
  CHECK(order == std::vector<std::uint64_t>{1, 2, 3, 99});
}

TEST_CASE("event queue ties break by sequence") {
  EventQueue q;
  for (std::uint64_t i = 0; i < 10; ++i) {
    Event e;
    e.at = static_cast<SimTime>(i % 3);
    e.tag = i;
    q.push(e);
  }
  std::vector<std::uint64_t> tags;
  while (!q.empty()) tags.push_back(q.pop().tag);
  CHECK(tags == std::vector<std::uint64_t>{0, 3, 6, 9, 1, 4, 7, 2, 5, 8});
}

TEST_CASE("causality: no delivery precedes its send and latencies stay in range") {
  for (LatencyDist lat : {LatencyDist{UniformLatency{30, 200}}, LatencyDist{ExponentialLatency{50, 300}},
                          LatencyDist{ConstantLatency{12.5}}}) {
    Network net = three_devices(0.2, lat, 5);
    for (int i = 0; i < 300; ++i) net.send(2, kBroadcast, heartbeat(2), from_ms(i));
    net.run_until(from_ms(100'000), [&](const Event& ev, Network&) {
      CHECK(ev.at >= ev.sent_at);
      CHECK(ev.latency == ev.at - ev.sent_at);
      CHECK(ev.latency >= from_ms(static_cast<std::int64_t>(latency_floor_ms(lat))));
      if (const auto* u = std::get_if<UniformLatency>(&lat)) CHECK(ev.latency <= std::llround(u->hi_ms * 1000));
      if (const auto* x = std::get_if<ExponentialLatency>(&lat)) CHECK(ev.latency <= std::llround(x->cap_ms * 1000));
      if (std::holds_alternative<ConstantLatency>(lat)) CHECK(ev.latency == 12500);
    });
  }
}

TEST_CASE("errors on unknown devices and past send times") {
  Network net = three_devices(0.0, ConstantLatency{1}, 1);
  CHECK_ERROR_CODE(net.send(9, 1, heartbeat(9), 0), ErrorCode::Sim);
  CHECK_ERROR_CODE(net.send(1, 9, heartbeat(1), 0), ErrorCode::Sim);
  CHECK_ERROR_CODE(net.add_device(1), ErrorCode::Sim);
  net.run_until(from_ms(10), {});
  CHECK_ERROR_CODE(net.send(1, 2, heartbeat(1), from_ms(5)), ErrorCode::Sim);
}

TEST_CASE("offline devices neither send nor receive") {
  Network net = three_devices(0.0, ConstantLatency{1}, 1);
  net.set_online(3, false);
  net.send(1, kBroadcast, heartbeat(1), 0);
  net.send(3, 1, heartbeat(3), 0);
  std::vector<DeviceId> got;
  net.run_until(from_ms(10), [&](const Event& ev, Network&) { got.push_back(ev.device); });
  CHECK(got == std::vector<DeviceId>{2});
}

TEST_CASE("clock offsets and addresses") {
  Network net = three_devices(0.0, ConstantLatency{1}, 1);
  CHECK(net.local_time(2, 1000) == 16000);
  CHECK(net.global_time(3, 0) == 40000);
  const auto ep = net.address_of(3);
  CHECK(ep.address.to_string() == "10.0.0.3");
  CHECK(net.resolve(ep) == DeviceId{3});
}

TEST_CASE("latency spec parsing") {
  CHECK(parse_latency("uniform:30:200") == LatencyDist{UniformLatency{30, 200}});
  CHECK(parse_latency("constant:40") == LatencyDist{ConstantLatency{40}});
  CHECK(parse_latency("exponential:50:1000") == LatencyDist{ExponentialLatency{50, 1000}});
  CHECK(to_string(parse_latency("uniform:30:200")) == "uniform:30:200");
  CHECK_ERROR_CODE(parse_latency("gauss:1"), ErrorCode::Parse);
  CHECK_ERROR_CODE(parse_latency("uniform:30"), ErrorCode::Parse);
  CHECK_ERROR_CODE(parse_latency("constant:abc"), ErrorCode::Parse);
}

TEST_CASE("model validation") {
  CHECK_ERROR_CODE(Network(NetworkModel{1.5, ConstantLatency{1}, 1}), ErrorCode::Validation);
  CHECK_ERROR_CODE(Network(NetworkModel{0.1, UniformLatency{200, 30}, 1}), ErrorCode::Validation);
}

TEST_CASE("trace line format") {
  CHECK(format_trace_line({1234567, 3, "deliver", "Heartbeat from=1"}) == "1234.567 3 deliver Heartbeat from=1");
  CHECK(format_trace_line({5, 1, "timer", ""}) == "0.005 1 timer");
}
