// Loop vectorization of elementwise array loops.
//
//   H(i):  t = cmplt i, N; cbr t, B, exit
//   B:     x = aload a, i; y = aload b, i; r = op x, y; astore c, i, r
//          i2 = add i, 1; br H(i2)
//
// gets a vector loop in front of it; the original loop runs the remainder:
//
//   VH(j): j4 = add j, W; t = cmple j4, N; cbr t, VB, H(j)
//   VB:    vbinop op, c, a, b, j, W; j2 = add j, W; br VH(j2)
//
// Arrays are told apart by allocation site; c must not share a site with a or b.

#include <algorithm>

#include "cirlab/cfg.hpp"
#include "cirlab/passes.hpp"
#include "util.hpp"

namespace cirlab {

namespace {

using detail::NameGen;

const std::string kUnknown = "*";

// Flow-insensitive, context-insensitive allocation-site sets for every value.
class PointsTo {
 public:
  explicit PointsTo(const Program& p) {
    std::set<std::string> dynamic_targets;
    for (const auto& fn : p.functions) {
      for (const auto& b : fn.blocks) {
        for (const auto& in : b.instrs) {
          if (in.op == Opcode::HandleConst) dynamic_targets.insert(in.symbol);
          if (in.op == Opcode::CallVirtual) {
            for (const auto& c : p.classes) dynamic_targets.insert(method_function_name(c.name, in.symbol));
          }
        }
      }
    }
    for (const auto& fn : p.functions) {
      if (!dynamic_targets.count(fn.name)) continue;
      for (const auto& prm : fn.params) sets_[key(fn.name, prm)].insert(kUnknown);
    }
    for (const auto& t : p.threads) {
      const Function* fn = p.find_function(t.function);
      if (!fn) continue;
      for (std::size_t k = 0; k < t.args.size() && k < fn->params.size(); ++k) {
        add(key(fn->name, fn->params[k]), of_literal(t.args[k]));
      }
    }
    for (bool grew = true; grew;) {
      grew = false;
      for (const auto& fn : p.functions) {
        for (const auto& b : fn.blocks) {
          for (const auto& in : b.instrs) grew |= transfer(p, fn, in);
          if (!b.term) continue;
          for (const auto* t : {&b.term->on_true, &b.term->on_false}) {
            const BasicBlock* target = fn.find_block(t->label);
            if (!target) continue;
            for (std::size_t k = 0; k < t->args.size() && k < target->params.size(); ++k) {
              grew |= add(key(fn.name, target->params[k]), of(fn, t->args[k]));
            }
          }
        }
      }
    }
  }

  std::set<std::string> of(const Function& fn, const Operand& op) const {
    if (op.kind == Operand::Kind::Global) return {"@" + op.name};
    if (!op.is_value()) return {};
    auto it = sets_.find(key(fn.name, op.name));
    return it == sets_.end() ? std::set<std::string>{} : it->second;
  }

 private:
  std::map<std::string, std::set<std::string>> sets_;

  static std::string key(const std::string& fn, const std::string& v) { return fn + "\n" + v; }

  static std::set<std::string> of_literal(const Operand& op) {
    if (op.kind == Operand::Kind::Global) return {"@" + op.name};
    return {};
  }

  bool add(const std::string& k, const std::set<std::string>& s) {
    auto& dst = sets_[k];
    std::size_t before = dst.size();
    dst.insert(s.begin(), s.end());
    return dst.size() != before;
  }

  bool transfer(const Program& p, const Function& fn, const Instruction& in) {
    bool grew = false;
    switch (in.op) {
      case Opcode::NewArray:
      case Opcode::New:
        grew |= add(key(fn.name, in.result), {fn.name + ":" + in.result});
        break;
      case Opcode::Mov:
        grew |= add(key(fn.name, in.result), of(fn, in.operands[0]));
        break;
      case Opcode::Select:
        grew |= add(key(fn.name, in.result), of(fn, in.operands[1]));
        grew |= add(key(fn.name, in.result), of(fn, in.operands[2]));
        break;
      case Opcode::Call: {
        if (const Function* callee = p.find_function(in.symbol)) {
          for (std::size_t k = 0; k < in.operands.size() && k < callee->params.size(); ++k) {
            grew |= add(key(callee->name, callee->params[k]), of(fn, in.operands[k]));
          }
        }
        if (in.has_result()) grew |= add(key(fn.name, in.result), {kUnknown});
        break;
      }
      case Opcode::GetField:
      case Opcode::ArrayLoad:
      case Opcode::CallVirtual:
      case Opcode::CallHandle:
        if (in.has_result()) grew |= add(key(fn.name, in.result), {kUnknown});
        break;
      default:
        break;
    }
    return grew;
  }
};

struct Shape {
  Operand a, b, c;
  BinaryOp op = BinaryOp::Add;
  Operand bound;
};

bool vector_op(BinaryOp op) {
  return op == BinaryOp::Add || op == BinaryOp::Sub || op == BinaryOp::Mul || op == BinaryOp::And || op == BinaryOp::Or;
}

std::optional<Shape> match_shape(const Function& fn, const Cfg& cfg, const Loop& loop) {
  if (loop.blocks.size() != 2 || loop.latches.size() != 1) return std::nullopt;
  const BasicBlock& h = fn.blocks[static_cast<std::size_t>(loop.header)];
  int bi = loop.latches[0];
  const BasicBlock& b = fn.blocks[static_cast<std::size_t>(bi)];
  if (h.params.size() != 1 || h.instrs.size() != 1) return std::nullopt;
  const Operand iv = Operand::value(h.params[0]);
  const Instruction& test = h.instrs[0];
  if (test.op != Opcode::Binary || test.binop != BinaryOp::CmpLt || test.operands[0] != iv) return std::nullopt;
  const Terminator& ht = *h.term;
  if (ht.kind != Terminator::Kind::CondBr || ht.cond != Operand::value(test.result)) return std::nullopt;
  if (ht.on_true.label != b.label || !ht.on_true.args.empty() || loop.contains(cfg.index_of(ht.on_false.label))) {
    return std::nullopt;
  }
  auto loop_defs = detail::defined_in(fn, loop.blocks);
  if (!detail::is_invariant(test.operands[1], loop_defs)) return std::nullopt;
  if (cfg.preds(bi).size() != 1) return std::nullopt;

  if (b.instrs.size() != 5) return std::nullopt;
  const Instruction& l1 = b.instrs[0];
  const Instruction& l2 = b.instrs[1];
  const Instruction& op = b.instrs[2];
  const Instruction& st = b.instrs[3];
  const Instruction& inc = b.instrs[4];
  if (l1.op != Opcode::ArrayLoad || l2.op != Opcode::ArrayLoad || l1.operands[1] != iv || l2.operands[1] != iv) {
    return std::nullopt;
  }
  if (op.op != Opcode::Binary || !vector_op(op.binop)) return std::nullopt;
  Shape s;
  if (op.operands[0] == Operand::value(l1.result) && op.operands[1] == Operand::value(l2.result)) {
    s.a = l1.operands[0];
    s.b = l2.operands[0];
  } else if (op.operands[0] == Operand::value(l2.result) && op.operands[1] == Operand::value(l1.result)) {
    s.a = l2.operands[0];
    s.b = l1.operands[0];
  } else {
    return std::nullopt;
  }
  if (st.op != Opcode::ArrayStore || st.operands[1] != iv || st.operands[2] != Operand::value(op.result)) return std::nullopt;
  s.c = st.operands[0];
  if (inc.op != Opcode::Binary || inc.binop != BinaryOp::Add || inc.operands[0] != iv || inc.operands[1] != Operand::integer(1)) {
    return std::nullopt;
  }
  const Terminator& bt = *b.term;
  if (bt.kind != Terminator::Kind::Br || bt.on_true.label != h.label || bt.on_true.args.size() != 1 ||
      bt.on_true.args[0] != Operand::value(inc.result)) {
    return std::nullopt;
  }
  for (const auto& arr : {s.a, s.b, s.c}) {
    if (!detail::is_invariant(arr, loop_defs)) return std::nullopt;
  }
  // Every load/store result besides the chain itself must stay inside the body.
  auto uses = detail::use_counts(fn);
  if (uses[l1.result] != 1 || uses[l2.result] != 1 || uses[op.result] != 1) return std::nullopt;
  s.op = op.binop;
  s.bound = test.operands[1];
  return s;
}

bool has_vector_op(const BasicBlock& b) {
  return std::any_of(b.instrs.begin(), b.instrs.end(), [](const Instruction& in) { return in.op == Opcode::VectorBinary; });
}

bool overlaps(const std::set<std::string>& x, const std::set<std::string>& y) {
  return std::any_of(x.begin(), x.end(), [&](const std::string& s) { return y.count(s) != 0; });
}

std::string analyze(const Function& fn, const Cfg& cfg, const Loop& loop, const PointsTo& pts, Shape& shape) {
  std::vector<Operand> loaded;
  std::vector<Operand> stored;
  for (int bi : loop.blocks) {
    for (const auto& in : fn.blocks[static_cast<std::size_t>(bi)].instrs) {
      if (in.op == Opcode::Guard) return "guard-present";
      if (in.op == Opcode::ArrayLoad) loaded.push_back(in.operands[0]);
      if (in.op == Opcode::ArrayStore) stored.push_back(in.operands[0]);
    }
  }
  for (const auto& arr : stored) {
    auto cs = pts.of(fn, arr);
    if (cs.empty() || cs.count(kUnknown)) return "alias-unknown";
    for (const auto& src : loaded) {
      auto ls = pts.of(fn, src);
      if (ls.empty() || ls.count(kUnknown)) return "alias-unknown";
      if (overlaps(cs, ls)) return "dependence";
    }
  }
  auto s = match_shape(fn, cfg, loop);
  if (!s) return "unsupported loop shape";
  for (int e : loop.entering) {
    const Terminator& t = *fn.blocks[static_cast<std::size_t>(e)].term;
    for (const auto& label : successors(t)) {
      int target = cfg.index_of(label);
      if (target != loop.header && has_vector_op(fn.blocks[static_cast<std::size_t>(target)])) return "remainder loop";
    }
  }
  shape = *s;
  return {};
}

void rewrite(Function& fn, const Loop& loop, const Shape& s, int width) {
  NameGen names(fn);
  const std::string header = fn.blocks[static_cast<std::size_t>(loop.header)].label;
  const std::string vhead = names.label(header + "_vec");
  const std::string vbody = names.label(header + "_vbody");

  for (int e : loop.entering) {
    Terminator& t = *fn.blocks[static_cast<std::size_t>(e)].term;
    if (t.on_true.label == header) t.on_true.label = vhead;
    if (t.kind == Terminator::Kind::CondBr && t.on_false.label == header) t.on_false.label = vhead;
  }

  const std::string j = names.value("j");
  const std::string jw = names.value("j");
  const std::string fits = names.value("fits");
  BasicBlock vh;
  vh.label = vhead;
  vh.params = {j};
  vh.instrs.push_back(detail::make_binary(BinaryOp::Add, jw, Operand::value(j), Operand::integer(width)));
  vh.instrs.push_back(detail::make_binary(BinaryOp::CmpLe, fits, Operand::value(jw), s.bound));
  vh.term = Terminator::cond_br(Operand::value(fits), BranchTarget{vbody, {}}, BranchTarget{header, {Operand::value(j)}});

  BasicBlock vb;
  vb.label = vbody;
  Instruction v = detail::make_instr(Opcode::VectorBinary, "", {s.c, s.a, s.b, Operand::value(j)});
  v.binop = s.op;
  v.width = width;
  vb.instrs.push_back(std::move(v));
  const std::string jn = names.value("j");
  vb.instrs.push_back(detail::make_binary(BinaryOp::Add, jn, Operand::value(j), Operand::integer(width)));
  vb.term = Terminator::br(BranchTarget{vhead, {Operand::value(jn)}});

  auto pos = fn.blocks.begin() + loop.header;
  pos = fn.blocks.insert(pos, std::move(vb));
  fn.blocks.insert(pos, std::move(vh));
}

} // namespace

PassResult loop_vectorize(const Program& p, int width) {
  PassReport report;
  report.pass = "loop_vectorize";
  if (width < 2) width = 2;
  Program out = p;
  const PointsTo pts(p);
  for (auto& fn : out.functions) {
    int here = 0;
    std::set<std::string> done;
    for (bool again = true; again;) {
      again = false;
      Cfg cfg(fn);
      DominatorTree dom(cfg);
      for (const auto& loop : find_loops(cfg, dom)) {
        const std::string label = cfg.label(loop.header);
        if (done.count(label)) continue;
        done.insert(label);
        bool touches_arrays = false;
        for (int bi : loop.blocks) {
          for (const auto& in : fn.blocks[static_cast<std::size_t>(bi)].instrs) {
            touches_arrays = touches_arrays || in.op == Opcode::ArrayStore;
          }
        }
        if (!touches_arrays) continue;
        Shape s;
        std::string why = analyze(fn, cfg, loop, pts, s);
        if (!why.empty()) {
          report.skipped.push_back({fn.name, label, why});
          continue;
        }
        rewrite(fn, loop, s, width);
        ++here;
        again = true;
        break;
      }
    }
    if (here == 0) continue;
    report.rewrites += here;
    report.counters["loops-vectorized"] += here;
    report.details.push_back(fn.name + ": " + std::to_string(here) + " loop(s) vectorized, width " + std::to_string(width));
  }
  return detail::finish(p, std::move(out), std::move(report));
}

} // namespace cirlab
