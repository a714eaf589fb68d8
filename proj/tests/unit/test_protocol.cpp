#include "camswarm/protocol.hpp"

#include "camswarm/rng.hpp"
#include "test_support.hpp"

using namespace camswarm;
using namespace camswarm::protocol;

namespace {

Message random_message(Rng& rng) {
  auto u32 = [&] { return static_cast<std::uint32_t>(rng.next()); };
  auto pick = [&](std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(rng.next() % static_cast<std::uint64_t>(hi - lo + 1));
  };
  Message m;
  m.sender = u32();
  switch (rng.next() % 9) {
    case 0: m.payload = JoinRequest{rng.next() | 1, static_cast<std::uint8_t>(pick(1, 5))}; break;
    case 1: m.payload = JoinAck{rng.next() | 1, u32()}; break;
    case 2: {
      MemberUpdate mu{static_cast<std::uint16_t>(u32()), {}};
      const auto n = pick(1, static_cast<std::int64_t>(kMaxMembers));
      for (int i = 0; i < n; ++i) mu.members.push_back(u32());
      m.payload = mu;
      break;
    }
    case 3: m.payload = OrientationReport{static_cast<std::int32_t>(pick(0, 359999))}; break;
    case 4: {
      OrientationBroadcast ob;
      ob.round = static_cast<std::uint16_t>(u32());
      ob.chunk_count = static_cast<std::uint8_t>(pick(1, 3));
      ob.chunk = static_cast<std::uint8_t>(pick(0, ob.chunk_count - 1));
      const auto n = pick(0, static_cast<std::int64_t>(kMaxYawEntriesPerFrame));
      for (int i = 0; i < n; ++i) ob.entries.push_back({u32(), static_cast<std::int32_t>(pick(-180000, 180000))});
      m.payload = ob;
      break;
    }
    case 5:
      m.payload = GuideBoxUpdate{u32(),
                                 u32(),
                                 static_cast<std::uint32_t>(pick(0, kUnitScale)),
                                 static_cast<std::uint32_t>(pick(0, kUnitScale)),
                                 static_cast<std::uint32_t>(pick(1, kUnitScale)),
                                 static_cast<std::uint32_t>(pick(1, kUnitScale))};
      break;
    case 6: {
      CountdownPayload cd{u32(), static_cast<std::int32_t>(pick(0, 5000)), CaptureMode::Photo, 0};
      if (rng.bernoulli(0.5)) {
        cd.mode = CaptureMode::Video;
        cd.video_duration_ms = u32();
      }
      m.payload = cd;
      break;
    }
    case 7: m.payload = CaptureAck{u32(), static_cast<std::uint16_t>(u32()), static_cast<std::int64_t>(rng.next())}; break;
    default: m.payload = Heartbeat{}; break;
  }
  return m;
}

}  // namespace

TEST_CASE("heartbeat frame matches the hand-assembled layout") {
  const Message hb{7, Heartbeat{}};
  const Bytes expected{0x43, 0x53, 0x57, 0x4D, 0x01, 0x09, 0x00, 0x00, 0x00, 0x00, 0x00, 0x07};
  CHECK(encode_message(hb) == expected);
  CHECK(decode_message(expected) == hb);
}

TEST_CASE("countdown frame matches the hand-assembled layout") {
  const Message m{0x01020304, CountdownPayload{0xA1B2C3D4u, 4950, CaptureMode::Video, 3000}};
  const Bytes expected{0x43, 0x53, 0x57, 0x4D, 0x01, 0x07, 0x00, 0x0D,  // header, len 13
                       0x01, 0x02, 0x03, 0x04,                          // sender
                       0xA1, 0xB2, 0xC3, 0xD4,                          // capture id
                       0x00, 0x00, 0x13, 0x56,                          // 4950
                       0x01,                                            // video
                       0x00, 0x00, 0x0B, 0xB8};                         // 3000
  CHECK(encode_message(m) == expected);
}

TEST_CASE("orientation report encodes negative-free milli-degrees big-endian") {
  const Message m{2, OrientationReport{359999}};
  const Bytes bytes = encode_message(m);
  REQUIRE(bytes.size() == 16);
  CHECK(bytes[12] == 0x00);
  CHECK(bytes[13] == 0x05);
  CHECK(bytes[14] == 0x7E);
  CHECK(bytes[15] == 0x3F);
}

TEST_CASE("encode rejects out-of-range fields") {
  CHECK_ERROR_CODE(encode_message({1, CountdownPayload{1, 6000, CaptureMode::Photo, 0}}), ErrorCode::Encode);
  CHECK_ERROR_CODE(encode_message({1, CountdownPayload{1, -1, CaptureMode::Photo, 0}}), ErrorCode::Encode);
  CHECK_ERROR_CODE(encode_message({1, CountdownPayload{1, 100, CaptureMode::Photo, 500}}), ErrorCode::Encode);
  CHECK_ERROR_CODE(encode_message({1, OrientationReport{360000}}), ErrorCode::Encode);
  CHECK_ERROR_CODE(encode_message({1, MemberUpdate{1, {}}}), ErrorCode::Encode);
  CHECK_ERROR_CODE(encode_message({1, MemberUpdate{1, std::vector<DeviceId>(13, 1)}}), ErrorCode::Encode);
  CHECK_ERROR_CODE(encode_message({1, GuideBoxUpdate{1, 1, 500000, 500000, 0, 100}}), ErrorCode::Encode);
  CHECK_ERROR_CODE(encode_message({1, JoinRequest{0, 1}}), ErrorCode::Encode);
}

TEST_CASE("decode error classes") {
  const Bytes good = encode_message({3, Heartbeat{}});

  SUBCASE("bad magic") {
    Bytes b = good;
    b[0] = 0x44;
    CHECK_ERROR_CODE(decode_message(b), ErrorCode::Frame);
  }
  SUBCASE("unknown kind") {
    Bytes b = good;
    b[5] = 0xFF;
    CHECK_ERROR_CODE(decode_message(b), ErrorCode::UnknownKind);
    b[5] = 0x00;
    CHECK_ERROR_CODE(decode_message(b), ErrorCode::UnknownKind);
  }
  SUBCASE("truncated payload") {
    Bytes b = encode_message({3, CountdownPayload{9, 100, CaptureMode::Photo, 0}});
    b.pop_back();
    CHECK_ERROR_CODE(decode_message(b), ErrorCode::Truncated);
  }
  SUBCASE("bad version") {
    Bytes b = good;
    b[4] = 0x02;
    CHECK_ERROR_CODE(decode_message(b), ErrorCode::Frame);
  }
  SUBCASE("trailing bytes") {
    Bytes b = good;
    b.push_back(0);
    CHECK_ERROR_CODE(decode_message(b), ErrorCode::Frame);
  }
  SUBCASE("length inconsistent with kind") {
    Bytes b = good;
    b[7] = 0x01;
    b.push_back(0x00);
    CHECK_ERROR_CODE(decode_message(b), ErrorCode::Frame);
  }
  SUBCASE("field out of range on the wire") {
    Bytes b = encode_message({3, CountdownPayload{9, 5000, CaptureMode::Photo, 0}});
    b[18] = 0x20;  // remaining_ms -> 0x2088 = 8328
    CHECK_ERROR_CODE(decode_message(b), ErrorCode::Frame);
  }
}

TEST_CASE("every prefix shorter than the header fails cleanly") {
  const Bytes good = encode_message({3, Heartbeat{}});
  for (std::size_t n = 0; n < kHeaderSize; ++n) {
    const Bytes prefix(good.begin(), good.begin() + static_cast<std::ptrdiff_t>(n));
    CHECK_THROWS_AS(decode_message(prefix), Error);
  }
}

TEST_CASE("property: random messages round-trip and fit in a datagram") {
  Rng rng(20240611);
  for (int i = 0; i < 5000; ++i) {
    const Message m = random_message(rng);
    const Bytes b = encode_message(m);
    CHECK(b.size() <= kMaxFrameSize);
    CHECK(decode_message(b) == m);
  }
}

TEST_CASE("largest payload of every kind stays within 64 bytes") {
  const std::vector<Message> biggest{
      {1, JoinRequest{~0ULL, 5}},
      {1, JoinAck{~0ULL, 1}},
      {1, MemberUpdate{1, std::vector<DeviceId>(kMaxMembers, 9)}},
      {1, OrientationReport{1}},
      {1, OrientationBroadcast{1, 0, 1, std::vector<YawEntry>(kMaxYawEntriesPerFrame, YawEntry{1, -180000})}},
      {1, GuideBoxUpdate{1, 1, 1, 1, 1, 1}},
      {1, CountdownPayload{1, 5000, CaptureMode::Video, ~0u}},
      {1, CaptureAck{1, 1, 1}},
      {1, Heartbeat{}}};
  for (const auto& m : biggest) CHECK(encode_message(m).size() <= kMaxFrameSize);
}

TEST_CASE("property: random byte strings never crash the decoder") {
  Rng rng(7);
  int accepted = 0;
  for (int i = 0; i < 20000; ++i) {
    Bytes b(rng.next() % 70);
    for (auto& x : b) x = static_cast<std::uint8_t>(rng.next());
    if (!b.empty() && rng.bernoulli(0.7)) {
      // Plant a valid header so the deeper paths get exercised.
      const std::uint8_t hdr[6] = {0x43, 0x53, 0x57, 0x4D, 0x01, static_cast<std::uint8_t>(1 + rng.next() % 9)};
      for (std::size_t k = 0; k < std::min<std::size_t>(6, b.size()); ++k) b[k] = hdr[k];
      if (b.size() >= 8) {
        const auto len = b.size() >= 12 ? b.size() - 12 : 0;
        b[6] = static_cast<std::uint8_t>(len >> 8);
        b[7] = static_cast<std::uint8_t>(len);
      }
    }
    try {
      const Message m = decode_message(b);
      CHECK(encode_message(m) == b);
      ++accepted;
    } catch (const Error&) {
    }
  }
  CHECK(accepted > 0);
}

TEST_CASE("qr payload formats per grammar") {
  QrPayload p;
  p.host.address.octets = {192, 168, 1, 5};
  p.host.port = 7000;
  p.swarm_id = 0x00000000DEADBEEFULL;
  const std::string text = encode_qr(p);
  CHECK(text == "camswarm://v1?host=192.168.1.5:7000&swarm=00000000deadbeef");
  CHECK(decode_qr(text) == p);
}

TEST_CASE("qr decode fault variants") {
  auto fault_of = [](std::string_view s) {
    try {
      decode_qr(s);
    } catch (const QrParseError& e) {
      CHECK(e.code() == ErrorCode::Parse);
      return e.fault();
    }
    FAIL("decode accepted " << s);
    return QrFault::Scheme;
  };
  CHECK(fault_of("http://x") == QrFault::Scheme);
  CHECK(fault_of("camswarm://v2?host=1.2.3.4:5&swarm=0000000000000001") == QrFault::Version);
  CHECK(fault_of("camswarm://v1?host=1.2.3.4:5") == QrFault::MissingSwarm);
  CHECK(fault_of("camswarm://v1?swarm=0000000000000001") == QrFault::MissingHost);
  CHECK(fault_of("camswarm://v1?host=1.2.3:5&swarm=0000000000000001") == QrFault::MalformedAddress);
  CHECK(fault_of("camswarm://v1?host=1.2.3.256:5&swarm=0000000000000001") == QrFault::MalformedAddress);
  CHECK(fault_of("camswarm://v1?host=1.2.3.4&swarm=0000000000000001") == QrFault::MalformedAddress);
  CHECK(fault_of("camswarm://v1?host=1.2.3.4:0&swarm=0000000000000001") == QrFault::MalformedAddress);
  CHECK(fault_of("camswarm://v1?host=1.2.3.4:70000&swarm=0000000000000001") == QrFault::MalformedAddress);
  CHECK(fault_of("camswarm://v1?host=1.2.3.4:5&swarm=0000000000000000") == QrFault::MalformedSwarm);
  CHECK(fault_of("camswarm://v1?host=1.2.3.4:5&swarm=123") == QrFault::MalformedSwarm);
  CHECK(fault_of("camswarm://v1?host=1.2.3.4:5&swarm=000000000000000g") == QrFault::MalformedSwarm);
}

TEST_CASE("qr encode validates its input") {
  QrPayload p;
  p.host.port = 7000;
  CHECK_ERROR_CODE(encode_qr(p), ErrorCode::Validation);
  p.swarm_id = 1;
  p.host.port = 0;
  CHECK_ERROR_CODE(encode_qr(p), ErrorCode::Validation);
}

TEST_CASE("property: qr round-trip on random valid payloads") {
  Rng rng(99);
  for (int i = 0; i < 2000; ++i) {
    QrPayload p;
    for (auto& o : p.host.address.octets) o = static_cast<std::uint8_t>(rng.next());
    p.host.port = static_cast<std::uint16_t>(1 + rng.next() % 65535);
    p.swarm_id = rng.next() | (1ULL << (rng.next() % 64));
    CHECK(decode_qr(encode_qr(p)) == p);
  }
}
