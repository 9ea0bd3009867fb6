#include "cirlab/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <json.hpp>

#include "cirlab/error.hpp"

namespace cirlab {

namespace {

struct Samples {
  SampleSet costs;
  MetricVector first;
};

Samples run_iterations(const Program& optimized, const BenchOptions& o) {
  if (o.warmup < 0) throw Error("warmup must be >= 0");
  if (o.measured < 1) throw Error("measured iterations must be >= 1");
  auto compiled = compile(optimized);
  Samples s;
  for (int i = 0; i < o.warmup + o.measured; ++i) {
    RunOptions ro;
    ro.policy = o.policy;
    ro.budget = o.budget;
    if (ro.policy.kind == SchedulePolicy::Kind::Random) ro.policy.seed += static_cast<std::uint64_t>(i);
    auto r = run(compiled, ro);
    if (r.trace.status != TraceStatus::Terminated) {
      throw Error("iteration " + std::to_string(i) + ": run ended with " + format_trace(r.trace));
    }
    if (i < o.warmup) continue;
    if (i == o.warmup) s.first = r.metrics;
    s.costs.values.push_back(static_cast<double>(r.metrics.refcycles));
  }
  return s;
}

nlohmann::json metrics_json(const MetricVector& m) {
  nlohmann::json j;
  for (auto col : kProfileColumns) j[std::string(col)] = metric_value(m, col);
  return j;
}

std::string label(const std::vector<std::string>& passes) {
  std::string out;
  for (const auto& p : passes) out += (out.empty() ? "" : ",") + p;
  return out.empty() ? "none" : out;
}

} // namespace

SampleSet bench(const Program& p, const std::vector<std::string>& passes, const BenchOptions& options) {
  auto optimized = pipeline(p, passes, options.pass_options).program;
  auto s = run_iterations(optimized, options).costs;
  s.label = label(passes);
  return s;
}

BenchReport compare(const Program& p, const std::string& benchmark, const std::vector<std::string>& passes,
                    const std::string& target, const BenchOptions& options, double winsor_fraction) {
  BenchReport r;
  r.benchmark = benchmark;
  r.target = target;
  r.winsor_fraction = winsor_fraction;
  r.passes_on = passes;
  if (std::find(passes.begin(), passes.end(), target) == passes.end()) r.passes_on.push_back(target);
  for (const auto& name : r.passes_on) {
    if (name != target) r.passes_off.push_back(name);
  }
  auto on = pipeline(p, r.passes_on, options.pass_options);
  auto off = pipeline(p, r.passes_off, options.pass_options);
  for (const auto& rep : on.reports) {
    if (rep.pass == target) r.target_rewrites += rep.rewrites;
  }
  auto on_samples = run_iterations(on.program, options);
  auto off_samples = run_iterations(off.program, options);
  on_samples.costs.label = "on";
  off_samples.costs.label = "off";
  r.on = winsorize(on_samples.costs, winsor_fraction);
  r.off = winsorize(off_samples.costs, winsor_fraction);
  r.on_metrics = on_samples.first;
  r.off_metrics = off_samples.first;
  const double mon = mean(r.on.values), moff = mean(r.off.values);
  r.impact_percent = mon == 0 ? 0.0 : (moff - mon) / mon * 100.0;
  if (r.on.values.size() >= 2) {
    r.welch = welch_t(r.off, r.on);
  } else {
    r.welch = WelchResult{0, 0, mon == moff ? 1.0 : 0.0, mon != moff};
  }
  r.significant = r.welch.p < kSignificanceLevel;
  return r;
}

std::string to_json(const BenchReport& r, int indent) {
  nlohmann::json j;
  j["benchmark"] = r.benchmark;
  j["target"] = r.target;
  j["passes_on"] = r.passes_on;
  j["passes_off"] = r.passes_off;
  j["target_rewrites"] = r.target_rewrites;
  j["winsor_fraction"] = r.winsor_fraction;
  j["on"] = {{"samples", r.on.values}, {"mean", mean(r.on.values)}, {"metrics", metrics_json(r.on_metrics)}};
  j["off"] = {{"samples", r.off.values}, {"mean", mean(r.off.values)}, {"metrics", metrics_json(r.off_metrics)}};
  j["impact_percent"] = r.impact_percent;
  j["welch"] = {{"t", std::isfinite(r.welch.t) ? nlohmann::json(r.welch.t) : nlohmann::json(r.welch.t > 0 ? "inf" : "-inf")},
                {"df", r.welch.df},
                {"p", r.welch.p},
                {"degenerate", r.welch.degenerate}};
  j["significant"] = r.significant;
  j["alpha"] = kSignificanceLevel;
  return j.dump(indent);
}

std::string format_report(const BenchReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-24s %-16s %+7.1f%%  p=%.4f%s", r.benchmark.c_str(), r.target.c_str(), r.impact_percent,
                r.welch.p, r.significant ? "  *" : "");
  return buf;
}

MetricMatrix profile_matrix(const std::vector<std::pair<std::string, Program>>& programs, const RunOptions& options) {
  MetricMatrix m;
  for (auto col : kProfileColumns) m.cols.emplace_back(col);
  m.values.cols = m.cols.size();
  for (const auto& [name, program] : programs) {
    auto r = run(program, options);
    std::vector<double> row;
    for (auto col : kProfileColumns) row.push_back(static_cast<double>(metric_value(r.metrics, col)));
    m.add_row(name, row, Provenance::Interpreter);
  }
  return m;
}

} // namespace cirlab
