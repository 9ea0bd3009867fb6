#pragma once

// Warm-up/steady-state benchmarking in interpreter cost units and per-pass
// on/off impact comparison.

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cirlab/interpreter.hpp"
#include "cirlab/metrics_pca.hpp"
#include "cirlab/passes.hpp"
#include "cirlab/stats.hpp"

namespace cirlab {

inline constexpr double kSignificanceLevel = 0.01;

struct BenchOptions {
  int warmup = 5;
  int measured = 15;
  /// A random policy advances its seed by one per iteration, warm-up included.
  SchedulePolicy policy;
  std::int64_t budget = 10'000'000;
  PassOptions pass_options;
};

/// Applies `passes`, then runs warmup + measured iterations and returns the
/// reference-cycle cost of each measured one. A run that does not terminate
/// normally throws Error naming the iteration.
SampleSet bench(const Program& p, const std::vector<std::string>& passes, const BenchOptions& options = {});

struct BenchReport {
  std::string benchmark;
  std::string target; // the pass toggled
  std::vector<std::string> passes_on;
  std::vector<std::string> passes_off;
  int target_rewrites = 0;
  SampleSet on;  // winsorized
  SampleSet off; // winsorized
  double winsor_fraction = 0;
  double impact_percent = 0; // (off - on) / on * 100, positive means faster with the pass
  WelchResult welch;
  bool significant = false;
  MetricVector on_metrics; // first measured iteration
  MetricVector off_metrics;
};

/// Benchmarks `passes` (with `target` appended when absent) against the same
/// list without `target`.
BenchReport compare(const Program& p, const std::string& benchmark, const std::vector<std::string>& passes,
                    const std::string& target, const BenchOptions& options = {}, double winsor_fraction = 0.1);

std::string to_json(const BenchReport& r, int indent = 2);
/// "name  target  +24.0%  p=0.0010  *", the star marking significance.
std::string format_report(const BenchReport& r);

/// One interpreter-produced metric row per program, columns kProfileColumns.
MetricMatrix profile_matrix(const std::vector<std::pair<std::string, Program>>& programs, const RunOptions& options = {});

} // namespace cirlab
