#pragma once

// Exhaustive interleaving exploration and the result-set refinement check.

#include <cstdint>
#include <optional>
#include <set>
#include <string_view>

#include "cirlab/interpreter.hpp"
#include "cirlab/ir.hpp"

namespace cirlab {

struct EnumerateOptions {
  std::int64_t budget = 10'000;       // max steps per execution, all threads together
  std::optional<int> preemptions;     // context-switch bound; unbounded when empty
  bool memoize = true;
  std::int64_t state_limit = 5'000'000;
};

struct ResultSet {
  std::set<ResultTrace> traces;
  /// False when some execution hit the step budget or the state limit was reached.
  bool exhausted = true;
  std::int64_t states_explored = 0;
};

ResultSet enumerate(const Program& program, const EnumerateOptions& options = {});

enum class Verdict : std::uint8_t { Refines, Violates, BoundedOk };

std::string_view verdict_name(Verdict v);

struct RefinementResult {
  Verdict verdict = Verdict::Refines;
  std::optional<ResultTrace> witness; // set iff Violates
  std::int64_t states_explored = 0;   // both programs together
  ResultSet original;
  ResultSet transformed;
};

/// Checks R(transformed) ⊆ R(original). Deopt and budget-cut traces of the
/// transformed program are not compared.
RefinementResult check_refinement(const Program& original, const Program& transformed,
                                  const EnumerateOptions& options = {});

} // namespace cirlab
