// Atomic-operation coalescing.
//
// Two back-to-back CAS retry loops on the same location
//
//   L1: v = getfield o, C.f; nv = f1(v); ok = cas o, C.f, v, nv; cbr ok, L2, L1
//   L2: w = getfield o, C.f; nw = f2(w); ok2 = cas o, C.f, w, nw; cbr ok2, next, L2
//
// become one loop installing f2(f1(v)):
//
//   L1: v = getfield o, C.f; nv = f1(v); w = mov nv; nw = f2(w); ok = const true
//       ok2 = cas o, C.f, v, nw; cbr ok2, next, L1

#include <algorithm>

#include "cirlab/cfg.hpp"
#include "cirlab/passes.hpp"
#include "util.hpp"

namespace cirlab {

namespace {

bool pure_instruction(const Instruction& in, const std::set<std::string>& pure) {
  switch (in.op) {
    case Opcode::Const:
    case Opcode::Mov:
    case Opcode::Binary:
    case Opcode::Select:
      return true;
    case Opcode::Call:
      return pure.count(in.symbol) != 0;
    default:
      return false;
  }
}

struct RetryLoop {
  int block = -1;
  std::size_t cas = 0; // index of the cas instruction
  Operand object;
  std::string owner;
  std::string field;
  std::string read;    // result of the getfield
  std::string success; // label of the exit edge
};

std::optional<RetryLoop> match_loop(const Function& fn, const Cfg& cfg, int b) {
  const BasicBlock& blk = fn.blocks[static_cast<std::size_t>(b)];
  if (!blk.params.empty() || !blk.term || blk.term->kind != Terminator::Kind::CondBr) return std::nullopt;
  if (blk.instrs.size() < 2) return std::nullopt;
  const Terminator& t = *blk.term;
  if (t.on_false.label != blk.label || !t.on_false.args.empty() || !t.on_true.args.empty()) return std::nullopt;
  if (t.on_true.label == blk.label) return std::nullopt;
  const Instruction& load = blk.instrs.front();
  const Instruction& cas = blk.instrs.back();
  if (load.op != Opcode::GetField || cas.op != Opcode::Cas || !cas.has_result()) return std::nullopt;
  if (!(t.cond == Operand::value(cas.result))) return std::nullopt;
  if (load.operands[0] != cas.operands[0] || load.field != cas.field || load.symbol != cas.symbol) return std::nullopt;
  if (cas.operands[1] != Operand::value(load.result)) return std::nullopt;
  auto defs = detail::defined_in(fn, {b});
  if (!detail::is_invariant(load.operands[0], defs)) return std::nullopt;
  (void)cfg;
  RetryLoop r;
  r.block = b;
  r.cas = blk.instrs.size() - 1;
  r.object = load.operands[0];
  r.owner = load.symbol;
  r.field = load.field;
  r.read = load.result;
  r.success = t.on_true.label;
  return r;
}

bool pure_update(const BasicBlock& blk, const RetryLoop& r, const std::set<std::string>& pure) {
  for (std::size_t i = 1; i < r.cas; ++i) {
    if (!pure_instruction(blk.instrs[i], pure)) return false;
  }
  return true;
}

} // namespace

std::set<std::string> pure_functions(const Program& p) {
  std::set<std::string> pure;
  for (bool grew = true; grew;) {
    grew = false;
    for (const auto& fn : p.functions) {
      if (pure.count(fn.name)) continue;
      bool ok = true;
      for (const auto& b : fn.blocks) {
        for (const auto& in : b.instrs) ok = ok && pure_instruction(in, pure);
      }
      if (ok) {
        pure.insert(fn.name);
        grew = true;
      }
    }
  }
  return pure;
}

PassResult atomic_coalesce(const Program& p) {
  PassReport report;
  report.pass = "atomic_coalesce";
  Program out = p;
  const auto pure = pure_functions(p);
  for (auto& fn : out.functions) {
    int fused_here = 0;
    std::set<std::pair<std::string, std::string>> noted;
    for (bool again = true; again;) {
      again = false;
      Cfg cfg(fn);
      for (std::size_t b = 0; b < fn.blocks.size() && !again; ++b) {
        auto first = match_loop(fn, cfg, static_cast<int>(b));
        if (!first) continue;
        int nb = cfg.index_of(first->success);
        if (nb < 0 || nb == first->block) continue;
        auto second = match_loop(fn, cfg, nb);
        if (!second) continue;
        if (second->object != first->object || second->field != first->field || second->owner != first->owner) continue;
        const auto& preds = cfg.preds(nb);
        if (std::any_of(preds.begin(), preds.end(), [&](int q) { return q != nb && q != first->block; })) continue;
        BasicBlock& b1 = fn.blocks[b];
        BasicBlock& b2 = fn.blocks[static_cast<std::size_t>(nb)];
        if (!pure_update(b1, *first, pure) || !pure_update(b2, *second, pure)) {
          if (noted.insert({b1.label, b2.label}).second) report.skipped.push_back({fn.name, b1.label, "impure update"});
          continue;
        }

        const Instruction cas1 = b1.instrs[first->cas];
        const Instruction cas2 = b2.instrs[second->cas];
        std::vector<Instruction> fused(b1.instrs.begin(), b1.instrs.begin() + static_cast<std::ptrdiff_t>(first->cas));
        fused.push_back(detail::make_instr(Opcode::Mov, second->read, {cas1.operands[2]}));
        fused.insert(fused.end(), b2.instrs.begin() + 1, b2.instrs.begin() + static_cast<std::ptrdiff_t>(second->cas));
        fused.push_back(detail::make_instr(Opcode::Const, cas1.result, {Operand::boolean(true)}));
        Instruction cas = cas2;
        cas.operands[1] = Operand::value(first->read);
        fused.push_back(std::move(cas));

        Terminator term = *b2.term;
        term.on_false.label = b1.label;
        b1.instrs = std::move(fused);
        b1.term = std::move(term);
        fn.blocks.erase(fn.blocks.begin() + nb);
        ++fused_here;
        again = true;
      }
    }
    if (fused_here == 0) continue;
    detail::eliminate_dead_code(fn);
    report.rewrites += fused_here;
    report.counters["cas-loops-fused"] += fused_here;
    report.details.push_back(fn.name + ": " + std::to_string(fused_here) + " retry loop pair(s) fused");
  }
  return detail::finish(p, std::move(out), std::move(report));
}

} // namespace cirlab
