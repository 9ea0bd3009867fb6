// Dominance-based duplication simulation.
//
// A small merge block is copied into each of its predecessors. In a copy, a
// check that repeats a branch condition dominating that predecessor is
// replaced by the known outcome, and a branch on it becomes a jump. The
// duplication is kept only when at least one check disappears.

#include <algorithm>

#include "cirlab/cfg.hpp"
#include "cirlab/passes.hpp"
#include "util.hpp"

namespace cirlab {

namespace {

using detail::NameGen;

constexpr std::size_t kMaxMergeSize = 16;
constexpr int kMaxRounds = 16;

bool is_check(const Instruction& in) {
  if (in.op == Opcode::InstanceOf) return true;
  if (in.op != Opcode::Binary || (in.binop != BinaryOp::CmpEq && in.binop != BinaryOp::CmpNe)) return false;
  return std::any_of(in.operands.begin(), in.operands.end(), [](const Operand& o) { return o.kind == Operand::Kind::Null; });
}

Instruction check_key(Instruction in) {
  in.result.clear();
  return in;
}

struct Facts {
  std::vector<std::pair<Operand, bool>> values;      // branch conditions with known outcome
  std::vector<std::pair<Instruction, bool>> checks;  // checks computing such a condition
};

Facts facts_at(const Function& fn, const Cfg& cfg, const DominatorTree& dom,
               const std::unordered_map<std::string, detail::DefSite>& defs, int block) {
  Facts f;
  for (std::optional<int> x = block; x; x = dom.idom(*x)) {
    const auto& preds = cfg.preds(*x);
    if (preds.size() != 1) continue;
    const Terminator& t = *fn.blocks[static_cast<std::size_t>(preds[0])].term;
    if (t.kind != Terminator::Kind::CondBr || t.on_true.label == t.on_false.label) continue;
    bool outcome = t.on_true.label == cfg.label(*x);
    f.values.emplace_back(t.cond, outcome);
    if (!t.cond.is_value()) continue;
    auto it = defs.find(t.cond.name);
    if (it == defs.end() || it->second.index < 0) continue;
    const Instruction& in =
        fn.blocks[static_cast<std::size_t>(it->second.block)].instrs[static_cast<std::size_t>(it->second.index)];
    if (is_check(in)) f.checks.emplace_back(check_key(in), outcome);
  }
  return f;
}

template <class T>
std::optional<bool> lookup(const std::vector<std::pair<T, bool>>& facts, const T& key) {
  for (const auto& [k, v] : facts) {
    if (k == key) return v;
  }
  return std::nullopt;
}

struct Copy {
  std::vector<Instruction> instrs;
  Terminator term;
  int eliminated = 0;
};

Copy duplicate(const BasicBlock& m, const BranchTarget& edge, const Facts& facts, NameGen& names) {
  Copy c;
  std::unordered_map<std::string, Operand> rename;
  for (std::size_t k = 0; k < m.params.size(); ++k) rename[m.params[k]] = edge.args[k];
  for (const auto& in : m.instrs) {
    Instruction copy = in;
    detail::substitute(copy, rename);
    if (copy.has_result()) {
      std::string n = names.value(copy.result);
      rename[copy.result] = Operand::value(n);
      copy.result = n;
    }
    if (is_check(copy)) {
      if (auto known = lookup(facts.checks, check_key(copy))) {
        copy = detail::make_instr(Opcode::Const, copy.result, {Operand::boolean(*known)});
        ++c.eliminated;
      }
    }
    c.instrs.push_back(std::move(copy));
  }
  c.term = *m.term;
  detail::substitute(c.term, rename);
  if (c.term.kind == Terminator::Kind::CondBr) {
    std::optional<bool> known;
    if (c.term.cond.kind == Operand::Kind::Bool) known = c.term.cond.imm != 0;
    if (!known) {
      for (const auto& in : c.instrs) {
        if (c.term.cond == Operand::value(in.result) && in.op == Opcode::Const && in.operands[0].kind == Operand::Kind::Bool) {
          known = in.operands[0].imm != 0;
        }
      }
    }
    if (!known) {
      known = lookup(facts.values, c.term.cond);
      if (known) ++c.eliminated;
    }
    if (known) c.term = Terminator::br(*known ? c.term.on_true : c.term.on_false);
  }
  return c;
}

bool is_candidate(const Function& fn, const Cfg& cfg, const std::vector<Loop>& loops, int m) {
  if (m == 0 || !cfg.reachable(m)) return false;
  const BasicBlock& blk = fn.blocks[static_cast<std::size_t>(m)];
  if (blk.instrs.size() > kMaxMergeSize || !blk.term) return false;
  const auto& preds = cfg.preds(m);
  if (preds.size() < 2) return false;
  for (const auto& l : loops) {
    if (l.header == m) return false;
  }
  for (int p : preds) {
    if (p == m) return false;
    const auto& t = fn.blocks[static_cast<std::size_t>(p)].term;
    if (!t || t->kind != Terminator::Kind::Br) return false;
  }
  std::unordered_set<std::string> local(blk.params.begin(), blk.params.end());
  for (const auto& in : blk.instrs) {
    if (in.has_result()) local.insert(in.result);
  }
  for (std::size_t b = 0; b < fn.blocks.size(); ++b) {
    if (static_cast<int>(b) == m) continue;
    for (const auto& in : fn.blocks[b].instrs) {
      for (const auto* op : instruction_uses(in)) {
        if (op->is_value() && local.count(op->name)) return false;
      }
    }
    if (fn.blocks[b].term) {
      for (const auto* op : terminator_uses(*fn.blocks[b].term)) {
        if (op->is_value() && local.count(op->name)) return false;
      }
    }
  }
  return true;
}

bool has_check(const BasicBlock& b) {
  if (b.term && b.term->kind == Terminator::Kind::CondBr) return true;
  return std::any_of(b.instrs.begin(), b.instrs.end(), is_check);
}

} // namespace

PassResult dup_simulate(const Program& p) {
  PassReport report;
  report.pass = "dup_simulate";
  Program out = p;
  for (auto& fn : out.functions) {
    int merges = 0;
    int eliminated = 0;
    std::set<std::string> rejected;
    for (int round = 0; round < kMaxRounds; ++round) {
      Cfg cfg(fn);
      DominatorTree dom(cfg);
      auto loops = find_loops(cfg, dom);
      auto defs = detail::definition_sites(fn);
      bool applied = false;
      for (std::size_t m = 0; m < fn.blocks.size() && !applied; ++m) {
        const int mi = static_cast<int>(m);
        if (!is_candidate(fn, cfg, loops, mi) || !has_check(fn.blocks[m])) continue;
        NameGen names(fn);
        std::vector<std::pair<int, Copy>> copies;
        int gain = 0;
        for (int pr : cfg.preds(mi)) {
          Facts facts = facts_at(fn, cfg, dom, defs, pr);
          Copy c = duplicate(fn.blocks[m], fn.blocks[static_cast<std::size_t>(pr)].term->on_true, facts, names);
          gain += c.eliminated;
          copies.emplace_back(pr, std::move(c));
        }
        if (gain == 0) {
          if (rejected.insert(fn.blocks[m].label).second) {
            report.skipped.push_back({fn.name, fn.blocks[m].label, "no check eliminated"});
          }
          continue;
        }
        for (auto& [pr, c] : copies) {
          auto& blk = fn.blocks[static_cast<std::size_t>(pr)];
          blk.instrs.insert(blk.instrs.end(), c.instrs.begin(), c.instrs.end());
          blk.term = std::move(c.term);
        }
        fn.blocks.erase(fn.blocks.begin() + mi);
        detail::eliminate_dead_code(fn);
        ++merges;
        eliminated += gain;
        applied = true;
      }
      if (!applied) break;
    }
    if (merges == 0) continue;
    report.rewrites += merges;
    report.counters["merges-duplicated"] += merges;
    report.counters["checks-eliminated"] += eliminated;
    report.details.push_back(fn.name + ": " + std::to_string(merges) + " merge(s) duplicated, " +
                             std::to_string(eliminated) + " check(s) eliminated");
  }
  // A merge rejected in an early round may have been duplicated later.
  if (report.rewrites > 0) {
    std::erase_if(report.skipped, [&](const SkipNote& s) {
      const Function* f = out.find_function(s.function);
      return !f || !f->find_block(s.location);
    });
  }
  return detail::finish(p, std::move(out), std::move(report));
}

} // namespace cirlab
