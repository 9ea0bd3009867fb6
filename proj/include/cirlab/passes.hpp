#pragma once

// Optimization passes over guest programs. Every pass is a pure function from
// Program to Program; the input is never modified. When a pass rewrites
// nothing, the returned program is identical to the input.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "cirlab/ir.hpp"

namespace cirlab {

struct PassOptions {
  int chunk = 32;         // lock_coarsen: iterations per monitor hold
  int width = 4;          // loop_vectorize: lanes per vector op
  int inline_budget = 40; // handle_simplify: max callee instructions
};

struct SkipNote {
  std::string function;
  std::string location; // block label
  std::string reason;

  friend bool operator==(const SkipNote&, const SkipNote&) = default;
};

struct PassReport {
  std::string pass;
  int rewrites = 0;
  std::map<std::string, std::int64_t> counters; // e.g. "allocations-removed"
  std::vector<std::string> details;             // one line per rewrite, "function: what"
  std::vector<SkipNote> skipped;
  std::size_t instructions_before = 0;
  std::size_t instructions_after = 0;
};

struct PassResult {
  Program program;
  PassReport report;
};

PassResult pea_atomic(const Program& p);
PassResult lock_coarsen(const Program& p, int chunk = 32);
PassResult atomic_coalesce(const Program& p);
PassResult handle_simplify(const Program& p, int inline_budget = 40);
PassResult guard_motion(const Program& p);
PassResult loop_vectorize(const Program& p, int width = 4);
PassResult dup_simulate(const Program& p);

/// Pass names accepted by run_pass and pipeline, in canonical order.
const std::vector<std::string>& pass_names();

/// Throws Error for an unknown name.
PassResult run_pass(const Program& p, std::string_view name, const PassOptions& options = {});

struct PipelineResult {
  Program program;
  std::vector<PassReport> reports;
};

/// Applies the passes left to right.
PipelineResult pipeline(const Program& p, const std::vector<std::string>& passes, const PassOptions& options = {});

/// Functions whose bodies only compute on their arguments: no heap access,
/// allocation, synchronization, output, guards, or calls to impure functions.
std::set<std::string> pure_functions(const Program& p);

} // namespace cirlab
