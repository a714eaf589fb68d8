#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "camswarm/netsim.hpp"
#include "camswarm/sync.hpp"

namespace camswarm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitRuntime = 3;

struct StudyOptions {
  std::vector<double> losses{0.0, 0.1, 0.3, 0.5};
  std::vector<double> rates_hz{1, 5, 20};
  int trials = 1000;
  netsim::LatencyDist latency = netsim::UniformLatency{30, 200};
  int clients = 4;
  std::uint64_t seed = 1;
  int jobs = 1;
};

/// Countdown rows for every (loss, rate) plus a single-shot row per loss.
/// Throws Error(Validation) for trials < 1 or an empty grid.
std::vector<sync::StudyRow> run_sync_study(const StudyOptions& opts);
std::string format_study(const StudyOptions& opts, const std::vector<sync::StudyRow>& rows);

/// `validate`: diagnostics for a timeline source or an EDL file.
/// `render-plan`: the EDL for a timeline source.
std::string edl_command(const std::string& action, const std::string& text);

/// Full command line, argv[0] included. Returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace camswarm::cli
