#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "camswarm/gateway.hpp"
#include "camswarm/playback.hpp"
#include "camswarm/scenario.hpp"
#include "test_support.hpp"

using namespace camswarm;

namespace {

const std::string kRoot = CAMSWARM_SOURCE_DIR;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "camswarm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("camswarm_cli_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

void write(const std::filesystem::path& p, const std::string& s) { std::ofstream(p) << s; }

}  // namespace

TEST_CASE("simulate the bundled scenario") {
  const auto dir = temp_dir("sim");
  const auto r = run({"simulate", "--scenario", kRoot + "/scenarios/four_guided.scn", "--out", dir.string()});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("scenario: four_guided\n", 0) == 0);
  CHECK(std::filesystem::file_size(dir / "trace.txt") > 0);
  const auto again = run({"simulate", "--scenario", kRoot + "/scenarios/four_guided.scn"});
  CHECK(again.out == r.out);
  const auto other = run({"simulate", "--scenario", kRoot + "/scenarios/four_guided.scn", "--seed", "9"});
  CHECK(other.out.find("seed: 9\n") != std::string::npos);
}

TEST_CASE("exit codes") {
  CHECK(run({"simulate", "--scenario", "/no/such/file.scn"}).code == 2);
  CHECK(run({}).code == 2);
  CHECK(run({"frobnicate"}).code == 2);
  CHECK(run({"--help"}).code == 0);
  const auto dir = temp_dir("codes");
  write(dir / "bad.scn", "device 1\nat 0 host 1\nat 10 jump 1\nend 100\n");
  const auto bad = run({"simulate", "--scenario", (dir / "bad.scn").string()});
  CHECK(bad.code == 2);
  CHECK(bad.err.find("line 3:") != std::string::npos);
  write(dir / "runtime.scn", "device 1\ndevice 2\nat 0 join 2 via 1\nend 100\n");
  CHECK(run({"simulate", "--scenario", (dir / "runtime.scn").string()}).code == 3);
  CHECK(run({"sync-study", "--trials", "0"}).code == 2);
  CHECK(run({"sync-study", "--latency", "normal:3"}).code == 2);
}

TEST_CASE("sync study rows") {
  const auto r = run({"sync-study", "--trials", "300", "--loss", "0,0.5", "--rate-hz", "20", "--jobs", "2",
                      "--latency", "constant:40"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("0.000 20.000 countdown 300 0 0.000000 40.000000 ") != std::string::npos);
  CHECK(r.out.find("0.000 - single_shot 300 0 0.000000 40.000000 ") != std::string::npos);
  CHECK(r.out.find("0.500 20.000 countdown 300 0 0.000000") != std::string::npos);
  CHECK(r.out.find("0.500 - single_shot 300 ") != std::string::npos);

  cli::StudyOptions o;
  o.losses = {0.5};
  o.rates_hz = {20};
  o.trials = 200;
  o.jobs = 1;
  const auto one = cli::format_study(o, cli::run_sync_study(o));
  o.jobs = 3;
  CHECK(cli::format_study(o, cli::run_sync_study(o)) == one);
  o.trials = 0;
  CHECK_ERROR_CODE(cli::run_sync_study(o), ErrorCode::Validation);
}

TEST_CASE("edl validate and render-plan") {
  const auto tl = kRoot + "/scenarios/three_views.timeline";
  const auto v = run({"edl", "validate", tl});
  CHECK(v.code == 0);
  CHECK(v.out == "ok duration=4000 views=3 transitions=2\n");
  const auto r = run({"edl", "render-plan", tl});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("B 1000 2500\n") != std::string::npos);

  const auto dir = temp_dir("edl");
  write(dir / "out.edl", r.out);
  CHECK(run({"edl", "validate", (dir / "out.edl").string()}).out == v.out);

  write(dir / "order.timeline", "duration 4000\nview A 0 -\nview B 9 -\ninitial A\ncut 2000 B\ncut 1000 A\n");
  const auto bad = run({"edl", "validate", (dir / "order.timeline").string()});
  CHECK(bad.code == 2);
  CHECK(bad.err.find("OrderError") != std::string::npos);
  CHECK(bad.err.find("line 6:") != std::string::npos);
}

TEST_CASE("gateway export matches the edl command") {
  const auto text = [&] {
    std::ifstream in(kRoot + "/scenarios/three_views.timeline");
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }();
  const auto tl = playback::parse_timeline(text);
  gateway::Session s(scenario::parse_scenario("device 1\nend 10\n"));
  gateway::json views = gateway::json::array();
  for (const auto& v : tl.views()) views.push_back({{"id", v.id}, {"rel_yaw", v.rel_yaw}, {"media", v.media}});
  REQUIRE(s.command({{"cmd", "begin_timeline"}, {"duration_ms", tl.duration_ms()}, {"views", views},
                     {"initial", tl.initial_view()}})
              .body["ok"] == true);
  for (const auto& t : tl.transitions()) {
    REQUIRE(s.command({{"cmd", "add_transition"}, {"t_ms", t.t_ms}, {"view", t.to}}).body["ok"] == true);
  }
  const auto edl = s.command({{"cmd", "export_edl"}}).body["edl"].get<std::string>();
  CHECK(edl == run({"edl", "render-plan", kRoot + "/scenarios/three_views.timeline"}).out);
}

TEST_CASE("serve runs for a bounded time") {
  const auto r = run({"serve", "--scenario", kRoot + "/scenarios/four_guided.scn", "--port", "0", "--pace", "10",
                      "--duration", "0.5"});
  CHECK(r.code == 0);
  CHECK(r.out.rfind("serving on http://127.0.0.1:", 0) == 0);
}
