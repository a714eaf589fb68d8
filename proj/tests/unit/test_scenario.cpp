#include "camswarm/scenario.hpp"

#include <string>

#include "test_support.hpp"

using namespace camswarm;
using namespace camswarm::scenario;

namespace {

const std::string kBundled = std::string(CAMSWARM_SOURCE_DIR) + "/scenarios/four_guided.scn";

std::string line_of(const std::string& src) {
  try {
    parse_scenario(src);
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::Scenario);
    const std::string what = e.what();
    return what.substr(0, what.find(':'));
  }
  return "no error";
}

const char* kSmall =
    "seed 5\n"
    "network loss=0 latency=constant:40\n"
    "device 1 angle=0\n"
    "device 2 angle=30 offset_ms=120\n"
    "device 3 angle=-30 offset_ms=-80\n"
    "at 0 host 1\n"
    "at 100 join 2 via 1\n"
    "at 100 join 3 via 1\n"
    "at 2000 guide 1 box 0.5 0.5 0.1 0.5\n"
    "at 3000 capture video duration=1000 rate=10\n"
    "end 10000\n";

}  // namespace

TEST_CASE("parse a small scenario") {
  const auto sc = parse_scenario(kSmall, "small");
  CHECK(sc.seed == 5);
  CHECK(sc.devices.size() == 3);
  CHECK(sc.devices[1].clock_offset_ms == 120);
  REQUIRE(sc.actions.size() == 5);
  CHECK(std::holds_alternative<Join>(sc.actions[1].kind));
  const auto& cap = std::get<Capture>(sc.actions[4].kind);
  CHECK(cap.mode == protocol::CaptureMode::Video);
  CHECK(cap.video_duration_ms == 1000);
  CHECK(cap.rate_hz == 10);
  CHECK(sc.end_ms == 10000);
}

TEST_CASE("schema violations name their line") {
  CHECK(line_of("device 1\nat 0 host 2\nend 10\n") == "line 2");
  CHECK(line_of("device 1\nat 0 launch 1\nend 10\n") == "line 2");
  CHECK(line_of("device 1\n\n# c\nnetwork loss=2\nend 10\n") == "line 4");
  CHECK(line_of("device 1\ndevice 1\nend 10\n") == "line 2");
  CHECK(line_of("device 1 colour=red\nend 10\n") == "line 1");
  CHECK(line_of("device 1\nat 50 host 1\nat 10 host 1\nend 100\n") == "line 3");
  CHECK(line_of("device 1\ndevice 2\nat 0 capture video rate=20\nend 10\n") == "line 3");
  CHECK(line_of("device 1\nat 0 guide 1 box 0.9 0.5 0.5 0.5\nend 10\n") == "line 2");
  CHECK(line_of("device 1\nnetwork latency=gaussian:3\nend 10\n") == "line 2");
  CHECK(line_of("device 1\n") == "line 2");
  CHECK(line_of("end 10\n") == "line 2");
  CHECK(line_of("device 1\nend 10\nseed 3\n") == "line 3");
  CHECK_ERROR_CODE(load_scenario("/nonexistent/x.scn"), ErrorCode::Scenario);
}

TEST_CASE("runtime failures keep their code and gain the line") {
  const auto sc = parse_scenario("device 1\ndevice 2\nat 0 join 2 via 1\nend 100\n");
  try {
    run_scenario(sc);
    FAIL("expected a state error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::State);
    CHECK(std::string(e.what()).rfind("line 3:", 0) == 0);
  }
}

TEST_CASE("small scenario runs a capture") {
  const auto out = run_scenario(parse_scenario(kSmall, "small"));
  CHECK(out.report.joined == 3);
  REQUIRE(out.report.members_converged_ms);
  CHECK(*out.report.members_converged_ms <= 2000);
  REQUIRE(out.report.captures.size() == 1);
  CHECK(out.report.captures[0].devices == 2);
  CHECK(out.report.captures[0].missed == 0);
  CHECK(out.report.captures[0].mean_latency_ms == doctest::Approx(40));
  CHECK(out.report.captures[0].max_skew_ms == doctest::Approx(0).scale(1));
  CHECK(out.report_text.find("policy: guided\n") != std::string::npos);
  CHECK(out.report_text.find("agents_converged_ms: none\n") != std::string::npos);
  CHECK(out.trace_text.find(" fire ") != std::string::npos);
}

TEST_CASE("bundled scenario converges and is reproducible") {
  const auto sc = load_scenario(kBundled);
  CHECK(sc.name == "four_guided");
  const auto a = run_scenario(sc);
  const auto b = run_scenario(sc);
  CHECK(a.report_text == b.report_text);
  CHECK(a.trace_text == b.trace_text);
  REQUIRE(a.report.angle_rsd);
  CHECK(*a.report.angle_rsd <= 0.10);
  CHECK(a.report.joined == 4);
  REQUIRE(a.report.captures.size() == 1);
  CHECK(a.report.captures[0].missed == 0);
  CHECK(a.report.errors == 0);

  const auto other = run_scenario(sc, 43);
  CHECK(other.report.seed == 43);
  CHECK(other.report_text != a.report_text);
}
