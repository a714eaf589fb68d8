#include "cli.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

#include "camswarm/error.hpp"
#include "camswarm/gateway.hpp"
#include "camswarm/playback.hpp"
#include "camswarm/scenario.hpp"

namespace camswarm::cli {

namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted = true; }

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Parse, "cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::Sim, "cannot write '" + path + "'");
  f << content;
  if (!f) throw Error(ErrorCode::Sim, "cannot write '" + path + "'");
}

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::Parse:
    case ErrorCode::Scenario:
    case ErrorCode::Validation:
    case ErrorCode::Order:
    case ErrorCode::Noop:
    case ErrorCode::UnknownView:
    case ErrorCode::DuplicateView:
    case ErrorCode::InsufficientViews:
      return kExitUsage;
    default:
      return kExitRuntime;
  }
}

bool is_edl(std::string_view text) { return text.rfind("# camswarm edl v1", 0) == 0; }

}  // namespace

std::vector<sync::StudyRow> run_sync_study(const StudyOptions& opts) {
  if (opts.trials < 1) throw Error(ErrorCode::Validation, "trials must be at least 1");
  if (opts.losses.empty() || opts.rates_hz.empty()) throw Error(ErrorCode::Validation, "empty loss or rate grid");
  std::vector<sync::StudyRow> rows;
  for (double loss : opts.losses) {
    sync::TrialConfig cfg;
    cfg.loss_prob = loss;
    cfg.latency = opts.latency;
    cfg.clients = opts.clients;
    for (double rate : opts.rates_hz) {
      cfg.rate_hz = rate;
      cfg.single_shot = false;
      rows.push_back(sync::run_study_row(cfg, opts.trials, opts.seed, opts.jobs));
    }
    cfg.single_shot = true;
    rows.push_back(sync::run_study_row(cfg, opts.trials, opts.seed, opts.jobs));
  }
  return rows;
}

std::string format_study(const StudyOptions& opts, const std::vector<sync::StudyRow>& rows) {
  std::string out = "# sync study trials=" + std::to_string(opts.trials) + " clients=" + std::to_string(opts.clients) +
                    " latency=" + netsim::to_string(opts.latency) + " seed=" + std::to_string(opts.seed) + "\n";
  out += "loss rate_hz mode trials missed miss_rate mean_latency_ms mean_skew_ms max_skew_ms\n";
  for (const auto& r : rows) {
    out += fmt("%.3f", r.loss_prob) + " " + (r.single_shot ? std::string("-") : fmt("%.3f", r.rate_hz)) + " " +
           (r.single_shot ? "single_shot" : "countdown") + " " + std::to_string(r.trials) + " " +
           std::to_string(r.missed) + " " + fmt("%.6f", r.miss_rate) + " " +
           (std::isnan(r.mean_latency_ms) ? std::string("none") : fmt("%.6f", r.mean_latency_ms)) + " " +
           fmt("%.6f", r.mean_skew_ms) + " " + fmt("%.6f", r.worst_skew_ms) + "\n";
  }
  return out;
}

std::string edl_command(const std::string& action, const std::string& text) {
  if (action == "validate") {
    playback::EditTimeline tl = is_edl(text) ? [&] {
      const auto plan = playback::parse_edl(text);
      playback::validate_plan(plan);
      return playback::import_edl(plan);
    }()
                                             : playback::parse_timeline(text);
    return "ok duration=" + std::to_string(tl.duration_ms()) + " views=" + std::to_string(tl.views().size()) +
           " transitions=" + std::to_string(tl.transitions().size()) + "\n";
  }
  if (action == "render-plan") {
    if (is_edl(text)) throw Error(ErrorCode::Parse, "render-plan takes a timeline source, not an EDL");
    return playback::format_edl(playback::export_edl(playback::parse_timeline(text)));
  }
  throw Error(ErrorCode::Parse, "unknown edl action '" + action + "'");
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"camswarm: smartphone camera-array coordination over a simulated network"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::uint64_t seed = 0;
  std::string out_path;

  auto* simulate = app.add_subcommand("simulate", "Run a scenario and write its report and trace");
  simulate->add_option("--scenario", scenario_path, "Scenario file")->required();
  simulate->add_option("--seed", seed, "Seed override");
  simulate->add_option("--out", out_path, "Directory for report.txt and trace.txt (default: report to stdout)");

  StudyOptions study;
  std::string latency_text = "uniform:30:200";
  std::string table_path;
  study.jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  auto* sync_study = app.add_subcommand("sync-study", "Monte-Carlo countdown reliability table");
  sync_study->add_option("--loss", study.losses, "Loss probabilities")->delimiter(',');
  sync_study->add_option("--rate-hz", study.rates_hz, "Countdown broadcast rates")->delimiter(',');
  sync_study->add_option("--trials", study.trials, "Trials per row");
  sync_study->add_option("--latency", latency_text, "constant:<ms> | uniform:<lo>:<hi> | exponential:<mean>:<cap>");
  sync_study->add_option("--clients", study.clients, "Clients per trial")->check(CLI::Range(1, 11));
  sync_study->add_option("--seed", study.seed, "Base seed");
  sync_study->add_option("--jobs", study.jobs, "Worker threads")->check(CLI::PositiveNumber);
  sync_study->add_option("--out", table_path, "Write the table here instead of stdout");

  std::string edl_action, edl_file, edl_out;
  auto* edl = app.add_subcommand("edl", "Validate a timeline or EDL, or render a timeline to an EDL");
  edl->add_option("action", edl_action, "validate | render-plan")
      ->required()
      ->check(CLI::IsMember({"validate", "render-plan"}));
  edl->add_option("file", edl_file, "Timeline source or EDL")->required();
  edl->add_option("--out", edl_out, "Write the EDL here instead of stdout");

  gateway::ServerOptions serve_opts;
  std::string serve_scenario;
  std::uint64_t serve_seed = 0;
  double serve_duration_s = 0;
  auto* serve = app.add_subcommand("serve", "Serve a paced simulation to the UI");
  serve->add_option("--scenario", serve_scenario, "Scenario file")->required();
  serve->add_option("--seed", serve_seed, "Seed override");
  serve->add_option("--host", serve_opts.host, "Bind address");
  serve->add_option("--port", serve_opts.port, "Port, 0 picks a free one")->check(CLI::Range(0, 65535));
  serve->add_option("--pace", serve_opts.pace, "Simulated seconds per wall second")->check(CLI::PositiveNumber);
  serve->add_option("--duration", serve_duration_s, "Stop after this many wall seconds (0 runs until interrupted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*simulate) {
      const auto sc = scenario::load_scenario(scenario_path);
      const auto result =
          scenario::run_scenario(sc, simulate->count("--seed") ? std::optional<std::uint64_t>(seed) : std::nullopt);
      if (out_path.empty()) {
        out << result.report_text;
      } else {
        write_file(out_path + "/report.txt", result.report_text);
        write_file(out_path + "/trace.txt", result.trace_text);
        out << result.report_text;
      }
    } else if (*sync_study) {
      study.latency = netsim::parse_latency(latency_text);
      const auto rows = run_sync_study(study);
      const auto table = format_study(study, rows);
      if (table_path.empty()) {
        out << table;
      } else {
        write_file(table_path, table);
      }
    } else if (*edl) {
      const auto result = edl_command(edl_action, read_file(edl_file));
      if (!edl_out.empty() && edl_action == "render-plan") {
        write_file(edl_out, result);
      } else {
        out << result;
      }
    } else if (*serve) {
      auto sc = scenario::load_scenario(serve_scenario);
      gateway::Session session(std::move(sc),
                               serve->count("--seed") ? std::optional<std::uint64_t>(serve_seed) : std::nullopt);
      gateway::Server server(std::move(session), serve_opts);
      server.start();
      out << "serving on http://" << serve_opts.host << ":" << server.port() << "\n" << std::flush;
      g_interrupted = false;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      const auto start = std::chrono::steady_clock::now();
      while (!g_interrupted) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
        if (server.stopped()) {
          err << "error: simulation loop stopped\n";
          return kExitRuntime;
        }
        if (serve_duration_s > 0 &&
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() >= serve_duration_s) {
          break;
        }
      }
      server.stop();
    }
  } catch (const Error& e) {
    err << "error: " << to_string(e.code()) << ": " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace camswarm::cli
