#pragma once

// Rewriting helpers shared by the passes.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include "cirlab/ir.hpp"
#include "cirlab/passes.hpp"

namespace cirlab::detail {

/// Hands out value names and block labels not yet used in a function.
class NameGen {
 public:
  explicit NameGen(const Function& fn);

  std::string value(std::string_view base);
  std::string label(std::string_view base);

 private:
  std::unordered_set<std::string> values_;
  std::unordered_set<std::string> labels_;
  std::string fresh(std::unordered_set<std::string>& used, std::string_view base);
};

/// Where a value is defined: block index and instruction index, -1 for a
/// block parameter, -2 for a function parameter.
struct DefSite {
  int block = -1;
  int index = -2;
};

std::unordered_map<std::string, DefSite> definition_sites(const Function& fn);

/// Number of reads of each value across instructions and terminators.
std::unordered_map<std::string, int> use_counts(const Function& fn);

/// Applies `map` to every operand that names a mapped value.
void substitute(Operand& op, const std::unordered_map<std::string, Operand>& map);
void substitute(Instruction& in, const std::unordered_map<std::string, Operand>& map);
void substitute(Terminator& t, const std::unordered_map<std::string, Operand>& map);

/// Removes unused removable instructions and unreachable blocks. Returns true
/// when something was removed.
bool eliminate_dead_code(Function& fn);

/// Values defined in any of the given blocks (parameters and results).
std::unordered_set<std::string> defined_in(const Function& fn, const std::vector<int>& blocks);

/// True when `op` does not change across iterations of a loop defining `loop_defs`.
inline bool is_invariant(const Operand& op, const std::unordered_set<std::string>& loop_defs) {
  return !op.is_value() || loop_defs.count(op.name) == 0;
}

Instruction make_instr(Opcode op, std::string result, std::vector<Operand> operands);
Instruction make_binary(BinaryOp op, std::string result, Operand a, Operand b);

/// Finalizes a report from the before/after programs.
PassResult finish(const Program& before, Program after, PassReport report);

/// True if class `cls` is `ancestor` or inherits from it.
bool is_subclass(const Program& p, const std::string& cls, const std::string& ancestor);

} // namespace cirlab::detail
