#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "rolealign/baseline.hpp"
#include "rolealign/discovery.hpp"

namespace rolealign::cli {

// Parses argv and runs one subcommand. Exit codes: 0 success, 1 internal
// error, 2 usage or input error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Comma-separated clauses, all of which must hold: key=value, key!=value, with
// value alternatives split by '|'. Keys: team, game, period, is_event,
// attack_direction. An empty expression selects every frame.
struct FramePredicate {
  std::function<bool(const Frame&)> test;
  std::string text;
};
FramePredicate parse_filter(const std::string& expr);

struct CompareOptions {
  int k_max = 20;  // WCE sweep over k = 2..k_max; 0 skips the sweep
  int pca_components = 10;
  int hard_max_iters = 500;
  std::size_t overlap_samples = 20000;
};

struct RoleComparison {
  int role = 0;
  double kl_soft_hard = 0.0;
  double kl_hard_soft = 0.0;
  double bhattacharyya = 0.0;
  double area_soft = 0.0;
  double area_hard = 0.0;
};

struct SweepRow {
  int k = 0;
  double aligned = 0.0;
  double identity = 0.0;
};

struct Comparison {
  std::size_t frames = 0;
  std::size_t agents = 0;
  DiscoveryResult soft;
  Template soft_roles;  // soft components in the hard method's role order
  HardEmResult hard;
  double soft_log_likelihood = 0.0;
  double hard_log_likelihood = 0.0;
  std::vector<RoleComparison> roles;
  OverlapPenalty soft_overlap, hard_overlap;
  std::vector<SweepRow> wce;  // per-player within-cluster error
  std::vector<SweepRow> pca;  // cumulative variance explained
  double delta() const { return soft_log_likelihood - hard_log_likelihood; }
};

// Soft discovery and hard-assignment EM from the same player-mean start on a
// prepared, complete dataset whose agent count equals cfg.k.
Comparison compare_methods(const Dataset& prepared, const DiscoveryConfig& cfg,
                           const CompareOptions& opts = {});
nlohmann::ordered_json to_json(const Comparison& c);

struct BenchRow {
  int n = 0;
  std::size_t frames = 0;
  int reps = 0;
  double hard_seconds = 0.0;  // fastest of reps, one iteration
  double soft_seconds = 0.0;
  double ratio() const { return hard_seconds / soft_seconds; }
};

// Per-iteration wall time of hard EM (assignment + refit) and of one full EM
// step, single-threaded, on synthetic data with n agents and n roles.
std::vector<BenchRow> run_bench(const std::vector<int>& ns, std::size_t frames, int reps,
                                std::uint64_t seed);
// Least-squares slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace rolealign::cli
