// Speculative guard motion.
//
// For a counted loop  H(i = lo, ..): t = cmplt i, N; cbr t, body, exit  with
// latch argument  i + 1, a guard anywhere in the loop body whose condition is
// a conjunction of cmplt/cmple over loop-invariant values and i + c is replaced
// by one guard in front of the loop that checks every comparison at i = lo and
// i = N - 1. The hoisted guard only runs when the loop is entered (lo < N).

#include <algorithm>

#include "cirlab/cfg.hpp"
#include "cirlab/passes.hpp"
#include "util.hpp"

namespace cirlab {

namespace {

using detail::DefSite;
using detail::NameGen;

bool cloneable(const Instruction& in) {
  switch (in.op) {
    case Opcode::Const:
    case Opcode::Mov:
    case Opcode::Select:
      return true;
    case Opcode::Binary:
      return is_removable(in);
    default:
      return false;
  }
}

struct CountedLoop {
  int preheader = -1;
  std::size_t iv_index = 0;
  std::string iv;
  Operand lo;
  Operand bound;
};

struct Side {
  bool affine = false;
  std::int64_t offset = 0; // i + offset when affine
  Operand value;           // invariant operand otherwise
};

struct Leaf {
  BinaryOp op = BinaryOp::CmpLt; // CmpLt, CmpLe, or And for an invariant boolean
  Side lhs, rhs;
};

class LoopContext {
 public:
  LoopContext(const Function& fn, const Loop& loop)
      : fn_(fn), loop_(loop), defs_(detail::definition_sites(fn)), loop_defs_(detail::defined_in(fn, loop.blocks)) {}

  const Instruction* def(const Operand& op) const {
    if (!op.is_value()) return nullptr;
    auto it = defs_.find(op.name);
    if (it == defs_.end() || it->second.index < 0) return nullptr;
    return &fn_.blocks[static_cast<std::size_t>(it->second.block)].instrs[static_cast<std::size_t>(it->second.index)];
  }

  bool in_loop(const Operand& op) const { return !detail::is_invariant(op, loop_defs_); }

  // Invariant, or computed inside the loop purely from invariant values.
  bool invariant_expr(const Operand& op, int depth = 0) const {
    if (!in_loop(op)) return true;
    if (depth > 16) return false;
    const Instruction* in = def(op);
    if (!in || !cloneable(*in)) return false;
    for (const auto* u : instruction_uses(*in)) {
      if (!invariant_expr(*u, depth + 1)) return false;
    }
    return true;
  }

  std::optional<Side> side(const Operand& op, const std::string& iv) const {
    if (op == Operand::value(iv)) return Side{true, 0, {}};
    if (invariant_expr(op)) return Side{false, 0, op};
    const Instruction* in = def(op);
    if (!in || in->op != Opcode::Binary) return std::nullopt;
    const Operand& a = in->operands[0];
    const Operand& b = in->operands[1];
    if (in->binop == BinaryOp::Add) {
      if (a == Operand::value(iv) && b.kind == Operand::Kind::Int) return Side{true, b.imm, {}};
      if (b == Operand::value(iv) && a.kind == Operand::Kind::Int) return Side{true, a.imm, {}};
    }
    if (in->binop == BinaryOp::Sub && a == Operand::value(iv) && b.kind == Operand::Kind::Int) {
      return Side{true, -b.imm, {}};
    }
    return std::nullopt;
  }

  bool leaves(const Operand& cond, const std::string& iv, std::vector<Leaf>& out, int depth = 0) const {
    if (depth > 32) return false;
    if (invariant_expr(cond)) {
      out.push_back(Leaf{BinaryOp::And, Side{false, 0, cond}, {}});
      return true;
    }
    const Instruction* in = def(cond);
    if (!in || in->op != Opcode::Binary) return false;
    if (in->binop == BinaryOp::And) {
      return leaves(in->operands[0], iv, out, depth + 1) && leaves(in->operands[1], iv, out, depth + 1);
    }
    if (in->binop != BinaryOp::CmpLt && in->binop != BinaryOp::CmpLe) return false;
    auto l = side(in->operands[0], iv);
    auto r = side(in->operands[1], iv);
    if (!l || !r) return false;
    out.push_back(Leaf{in->binop, *l, *r});
    return true;
  }

 private:
  const Function& fn_;
  const Loop& loop_;
  std::unordered_map<std::string, DefSite> defs_;
  std::unordered_set<std::string> loop_defs_;
};

std::string counted(const Function& fn, const Cfg& cfg, const Loop& loop, const LoopContext& ctx, CountedLoop& out) {
  if (loop.entering.size() != 1) return "no unique preheader";
  const BasicBlock& pre = fn.blocks[static_cast<std::size_t>(loop.entering[0])];
  if (!pre.term || pre.term->kind != Terminator::Kind::Br) return "no unique preheader";
  if (loop.latches.size() != 1) return "multiple latches";
  const BasicBlock& h = fn.blocks[static_cast<std::size_t>(loop.header)];
  const BasicBlock& latch = fn.blocks[static_cast<std::size_t>(loop.latches[0])];
  if (!h.term || h.term->kind != Terminator::Kind::CondBr) return "no induction variable";
  if (!loop.contains(cfg.index_of(h.term->on_true.label)) || loop.contains(cfg.index_of(h.term->on_false.label))) {
    return "no induction variable";
  }
  const Instruction* test = ctx.def(h.term->cond);
  if (!test || test->op != Opcode::Binary || test->binop != BinaryOp::CmpLt) return "no induction variable";
  if (latch.term->kind != Terminator::Kind::Br) return "no induction variable";
  for (std::size_t k = 0; k < h.params.size(); ++k) {
    const Operand iv = Operand::value(h.params[k]);
    if (test->operands[0] != iv || !ctx.invariant_expr(test->operands[1]) || ctx.in_loop(test->operands[1])) continue;
    const Instruction* step = ctx.def(latch.term->on_true.args[k]);
    if (!step || step->op != Opcode::Binary || step->binop != BinaryOp::Add) continue;
    bool unit = (step->operands[0] == iv && step->operands[1] == Operand::integer(1)) ||
                (step->operands[1] == iv && step->operands[0] == Operand::integer(1));
    if (!unit) continue;
    const Operand& lo = pre.term->on_true.args[k];
    if (ctx.in_loop(lo)) continue;
    out.preheader = loop.entering[0];
    out.iv_index = k;
    out.iv = h.params[k];
    out.lo = lo;
    out.bound = test->operands[1];
    return {};
  }
  return "no induction variable";
}

// Emits hoisted code into one block, cloning in-loop invariant expressions.
class Emitter {
 public:
  Emitter(NameGen& names, const LoopContext& ctx, const CountedLoop& cl) : names_(names), ctx_(ctx), cl_(cl) {}

  std::vector<Instruction> code;

  Operand invariant(const Operand& op) {
    if (!ctx_.in_loop(op)) return op;
    auto it = cloned_.find(op.name);
    if (it != cloned_.end()) return it->second;
    Instruction in = *ctx_.def(op);
    for (auto* u : instruction_uses(in)) *u = invariant(*u);
    std::string n = names_.value(in.result);
    in.result = n;
    code.push_back(std::move(in));
    cloned_[op.name] = Operand::value(n);
    return Operand::value(n);
  }

  Operand at(const Side& s, bool high) {
    if (!s.affine) return invariant(s.value);
    Operand base = high ? last() : cl_.lo;
    if (s.offset == 0) return base;
    if (base.kind == Operand::Kind::Int) return Operand::integer(base.imm + s.offset);
    return emit(s.offset > 0 ? BinaryOp::Add : BinaryOp::Sub, "i", base, Operand::integer(s.offset > 0 ? s.offset : -s.offset));
  }

  // The comparison, or nothing when it is trivially true.
  std::optional<Operand> term(const Leaf& leaf, bool high) {
    if (leaf.op == BinaryOp::And) {
      if (high) return std::nullopt; // invariant: one copy is enough
      return invariant(leaf.lhs.value);
    }
    Operand a = at(leaf.lhs, high);
    Operand b = at(leaf.rhs, high);
    if (a.kind == Operand::Kind::Int && b.kind == Operand::Kind::Int) {
      bool holds = leaf.op == BinaryOp::CmpLt ? a.imm < b.imm : a.imm <= b.imm;
      if (holds) return std::nullopt;
      return Operand::boolean(false);
    }
    if (!leaf.lhs.affine && !leaf.rhs.affine && high) return std::nullopt;
    return emit(leaf.op, "g", a, b);
  }

  Operand emit(BinaryOp op, std::string_view base, Operand a, Operand b) {
    std::string n = names_.value(base);
    code.push_back(detail::make_binary(op, n, std::move(a), std::move(b)));
    return Operand::value(n);
  }

 private:
  NameGen& names_;
  const LoopContext& ctx_;
  const CountedLoop& cl_;
  std::unordered_map<std::string, Operand> cloned_;
  std::optional<Operand> last_;

  Operand last() {
    if (!last_) {
      Operand n = invariant(cl_.bound);
      last_ = n.kind == Operand::Kind::Int ? Operand::integer(n.imm - 1) : emit(BinaryOp::Sub, "hi", n, Operand::integer(1));
    }
    return *last_;
  }
};

struct GuardSite {
  int block;
  std::size_t index;
  std::vector<Leaf> leaves;
};

} // namespace

PassResult guard_motion(const Program& p) {
  PassReport report;
  report.pass = "guard_motion";
  Program out = p;
  for (auto& fn : out.functions) {
    int hoisted_here = 0;
    std::set<std::string> done;
    for (bool again = true; again;) {
      again = false;
      Cfg cfg(fn);
      DominatorTree dom(cfg);
      auto loops = find_loops(cfg, dom);
      for (const auto& loop : loops) {
        const std::string header_label = cfg.label(loop.header);
        if (done.count(header_label)) continue;
        done.insert(header_label);
        std::vector<std::pair<int, std::size_t>> guards;
        for (int b : loop.blocks) {
          const auto& ins = fn.blocks[static_cast<std::size_t>(b)].instrs;
          for (std::size_t i = 0; i < ins.size(); ++i) {
            if (ins[i].op == Opcode::Guard) guards.emplace_back(b, i);
          }
        }
        if (guards.empty()) continue;
        LoopContext ctx(fn, loop);
        CountedLoop cl;
        std::string why = counted(fn, cfg, loop, ctx, cl);
        if (!why.empty()) {
          report.skipped.push_back({fn.name, header_label, why});
          continue;
        }
        std::vector<GuardSite> sites;
        for (auto [b, i] : guards) {
          if (b == loop.header) {
            report.skipped.push_back({fn.name, header_label, "guard in loop header"});
            continue;
          }
          GuardSite s{b, i, {}};
          if (!ctx.leaves(fn.blocks[static_cast<std::size_t>(b)].instrs[i].operands[0], cl.iv, s.leaves)) {
            report.skipped.push_back({fn.name, fn.blocks[static_cast<std::size_t>(b)].label, "non-monotonic condition"});
            continue;
          }
          sites.push_back(std::move(s));
        }
        if (sites.empty()) continue;

        NameGen names(fn);
        Emitter em(names, ctx, cl);
        std::vector<Instruction> hoisted_guards;
        for (const auto& s : sites) {
          std::vector<Operand> terms;
          for (bool high : {false, true}) {
            for (const auto& leaf : s.leaves) {
              if (auto t = em.term(leaf, high)) terms.push_back(*t);
            }
          }
          if (terms.empty()) continue;
          Operand all = terms[0];
          for (std::size_t k = 1; k < terms.size(); ++k) all = em.emit(BinaryOp::And, "g", all, terms[k]);
          Instruction g = fn.blocks[static_cast<std::size_t>(s.block)].instrs[s.index];
          g.operands[0] = all;
          hoisted_guards.push_back(std::move(g));
        }

        BasicBlock& pre = fn.blocks[static_cast<std::size_t>(cl.preheader)];
        const BranchTarget to_header = pre.term->on_true;
        const bool inserted = !em.code.empty() || !hoisted_guards.empty();
        if (inserted) {
          BasicBlock gb;
          gb.label = names.label(header_label + "_guard");
          gb.instrs = std::move(em.code);
          for (auto& g : hoisted_guards) gb.instrs.push_back(std::move(g));
          gb.term = Terminator::br(to_header);
          std::string entered = names.value("entered");
          pre.instrs.push_back(detail::make_binary(BinaryOp::CmpLt, entered, cl.lo, cl.bound));
          pre.term = Terminator::cond_br(Operand::value(entered), BranchTarget{gb.label, {}}, to_header);
          fn.blocks.insert(fn.blocks.begin() + loop.header, std::move(gb));
        }
        // Erase originals back to front so indices stay valid.
        std::sort(sites.begin(), sites.end(), [](const GuardSite& a, const GuardSite& b) {
          return std::tie(a.block, a.index) > std::tie(b.block, b.index);
        });
        for (const auto& s : sites) {
          int b = inserted && s.block >= loop.header ? s.block + 1 : s.block;
          auto& ins = fn.blocks[static_cast<std::size_t>(b)].instrs;
          ins.erase(ins.begin() + static_cast<std::ptrdiff_t>(s.index));
        }
        hoisted_here += static_cast<int>(sites.size());
        again = true;
        break;
      }
    }
    if (hoisted_here == 0) continue;
    detail::eliminate_dead_code(fn);
    report.rewrites += hoisted_here;
    report.counters["guards-hoisted"] += hoisted_here;
    report.details.push_back(fn.name + ": " + std::to_string(hoisted_here) + " guard(s) hoisted");
  }
  return detail::finish(p, std::move(out), std::move(report));
}

} // namespace cirlab
