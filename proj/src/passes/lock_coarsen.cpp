// Loop-wide lock coarsening.
//
//   H(p..):  c = cmplt ..; cbr c, B, exit          H(p..):  ...; cbr c, enter, exit
//   B:       monitorenter x; ...                   enter:   monitorenter x; br B(h.., C)
//   L:       ...; monitorexit x; ...; br H(a..)    B(h'.., k): ...
//                                                  L:       ...; k2 = sub k, 1; z = cmpeq k2, 0
//                                                           cbr z, release(a..), IH(a.., k2)
//                                                  IH(p'.., kk): copy of H; cbr c', B(h'.., kk), release(p'..)
//                                                  release(q..): monitorexit x; br H(q..)
//
// The lock is held for up to C consecutive iterations.

#include <algorithm>

#include "cirlab/cfg.hpp"
#include "cirlab/passes.hpp"
#include "util.hpp"

namespace cirlab {

namespace {

using detail::NameGen;

bool is_blocking(Opcode op) {
  switch (op) {
    case Opcode::MonitorEnter:
    case Opcode::MonitorExit:
    case Opcode::Wait:
    case Opcode::Notify:
    case Opcode::NotifyAll:
    case Opcode::Park:
    case Opcode::Call:
    case Opcode::CallVirtual:
    case Opcode::CallHandle:
      return true;
    default:
      return false;
  }
}

struct Candidate {
  int header = -1;
  int body = -1;
  int latch = -1;
  std::size_t exit_index = 0; // index of the monitorexit in the latch
  Operand lock;
  std::vector<int> region; // loop blocks except the header
};

// Returns a skip reason, or empty when the loop can be coarsened.
std::string analyze(const Function& fn, const Cfg& cfg, const Loop& loop, const std::vector<Loop>& all, Candidate& c) {
  for (const auto& other : all) {
    if (&other != &loop && other.header != loop.header && loop.contains(other.header)) return "not innermost";
  }
  const BasicBlock& h = fn.blocks[static_cast<std::size_t>(loop.header)];
  if (!h.term || h.term->kind != Terminator::Kind::CondBr) return "header does not end in a conditional branch";
  int body = cfg.index_of(h.term->on_true.label);
  int exit = cfg.index_of(h.term->on_false.label);
  if (body < 0 || !loop.contains(body) || loop.contains(exit) || body == loop.header) return "unsupported loop shape";
  if (cfg.preds(body).size() != 1) return "unsupported loop shape";
  for (auto [from, to] : loop.exits) {
    (void)to;
    if (from != loop.header) return "loop exits from the body";
  }
  if (loop.latches.size() != 1) return "multiple latches";
  int latch = loop.latches[0];
  const BasicBlock& lb = fn.blocks[static_cast<std::size_t>(latch)];
  if (!lb.term || lb.term->kind != Terminator::Kind::Br) return "unsupported loop shape";

  const BasicBlock& bb = fn.blocks[static_cast<std::size_t>(body)];
  if (bb.instrs.empty() || bb.instrs[0].op != Opcode::MonitorEnter) return "no monitor at loop entry";
  Operand lock = bb.instrs[0].operands[0];
  auto loop_defs = detail::defined_in(fn, loop.blocks);
  if (!detail::is_invariant(lock, loop_defs)) return "monitor not loop-invariant";

  std::optional<std::size_t> exit_index;
  for (std::size_t i = lb.instrs.size(); i-- > 0;) {
    if (lb.instrs[i].op == Opcode::MonitorExit) {
      if (lb.instrs[i].operands[0] == lock) exit_index = i;
      break;
    }
  }
  if (!exit_index) return "latch does not release the monitor";

  for (int b : loop.blocks) {
    const auto& blk = fn.blocks[static_cast<std::size_t>(b)];
    for (std::size_t i = 0; i < blk.instrs.size(); ++i) {
      bool designated = (b == body && i == 0) || (b == latch && i == *exit_index);
      if (!designated && is_blocking(blk.instrs[i].op)) return "blocking op in region";
    }
  }

  c.header = loop.header;
  c.body = body;
  c.latch = latch;
  c.exit_index = *exit_index;
  c.lock = lock;
  for (int b : loop.blocks) {
    if (b != loop.header) c.region.push_back(b);
  }
  return {};
}

void rewrite(Function& fn, const Candidate& c, int chunk) {
  NameGen names(fn);
  BasicBlock& h = fn.blocks[static_cast<std::size_t>(c.header)];
  const std::string header_label = h.label;
  const std::string body_label = fn.blocks[static_cast<std::size_t>(c.body)].label;

  // Values defined in the header that the region reads become body parameters.
  std::unordered_set<std::string> header_defs(h.params.begin(), h.params.end());
  for (const auto& in : h.instrs) {
    if (in.has_result()) header_defs.insert(in.result);
  }
  std::vector<std::string> carried;
  for (int b : c.region) {
    const auto& blk = fn.blocks[static_cast<std::size_t>(b)];
    auto note = [&](const Operand* op) {
      if (op->is_value() && header_defs.count(op->name) &&
          std::find(carried.begin(), carried.end(), op->name) == carried.end()) {
        carried.push_back(op->name);
      }
    };
    for (const auto& in : blk.instrs) {
      for (const auto* op : instruction_uses(in)) note(op);
    }
    if (blk.term) {
      for (const auto* op : terminator_uses(*blk.term)) note(op);
    }
  }
  std::unordered_map<std::string, Operand> to_param;
  std::vector<std::string> body_params;
  for (const auto& v : carried) {
    std::string n = names.value(v);
    to_param[v] = Operand::value(n);
    body_params.push_back(n);
  }
  const std::string k = names.value("k");

  const std::string enter_label = names.label(header_label + "_enter");
  const std::string inner_label = names.label(header_label + "_inner");
  const std::string release_label = names.label(header_label + "_release");

  // Inner header: a renamed copy of H with one extra parameter.
  BasicBlock inner;
  inner.label = inner_label;
  std::unordered_map<std::string, Operand> to_inner;
  for (const auto& prm : h.params) {
    std::string n = names.value(prm);
    to_inner[prm] = Operand::value(n);
    inner.params.push_back(n);
  }
  const std::string kk = names.value("k");
  inner.params.push_back(kk);
  for (const auto& in : h.instrs) {
    Instruction copy = in;
    detail::substitute(copy, to_inner);
    if (copy.has_result()) {
      std::string n = names.value(copy.result);
      to_inner[copy.result] = Operand::value(n);
      copy.result = n;
    }
    inner.instrs.push_back(std::move(copy));
  }
  const BranchTarget header_true = h.term->on_true;
  {
    BranchTarget to_body{body_label, header_true.args};
    for (const auto& v : carried) to_body.args.push_back(Operand::value(v));
    to_body.args.push_back(Operand::value(kk));
    for (auto& a : to_body.args) detail::substitute(a, to_inner);
    // kk itself is not renamed by to_inner.
    BranchTarget to_release{release_label, {}};
    for (const auto& prm : inner.params) {
      if (prm != kk) to_release.args.push_back(Operand::value(prm));
    }
    Operand cond = h.term->cond;
    detail::substitute(cond, to_inner);
    inner.term = Terminator::cond_br(cond, std::move(to_body), std::move(to_release));
  }

  // enter: acquire once per chunk.
  BasicBlock enter;
  enter.label = enter_label;
  enter.instrs.push_back(fn.blocks[static_cast<std::size_t>(c.body)].instrs[0]);
  {
    BranchTarget to_body{body_label, header_true.args};
    for (const auto& v : carried) to_body.args.push_back(Operand::value(v));
    to_body.args.push_back(Operand::integer(chunk));
    enter.term = Terminator::br(std::move(to_body));
  }

  // release: drop the monitor and re-test the loop condition in H.
  BasicBlock release;
  release.label = release_label;
  {
    Instruction exit_instr = fn.blocks[static_cast<std::size_t>(c.latch)].instrs[c.exit_index];
    release.instrs.push_back(exit_instr);
    BranchTarget back{header_label, {}};
    for (const auto& prm : h.params) {
      std::string n = names.value(prm);
      release.params.push_back(n);
      back.args.push_back(Operand::value(n));
    }
    release.term = Terminator::br(std::move(back));
  }

  h.term->on_true = BranchTarget{enter_label, {}};

  // Region: read header values through the new body parameters.
  for (int b : c.region) {
    auto& blk = fn.blocks[static_cast<std::size_t>(b)];
    for (auto& in : blk.instrs) detail::substitute(in, to_param);
    if (blk.term) detail::substitute(*blk.term, to_param);
  }
  BasicBlock& body = fn.blocks[static_cast<std::size_t>(c.body)];
  body.instrs.erase(body.instrs.begin());
  body.params.insert(body.params.end(), body_params.begin(), body_params.end());
  body.params.push_back(k);

  BasicBlock& latch = fn.blocks[static_cast<std::size_t>(c.latch)];
  std::size_t exit_at = c.exit_index - (c.latch == c.body ? 1 : 0);
  latch.instrs.erase(latch.instrs.begin() + static_cast<std::ptrdiff_t>(exit_at));
  std::vector<Operand> back_args = latch.term->on_true.args;
  const std::string k2 = names.value("k");
  const std::string z = names.value("chunk_done");
  latch.instrs.push_back(detail::make_binary(BinaryOp::Sub, k2, Operand::value(k), Operand::integer(1)));
  latch.instrs.push_back(detail::make_binary(BinaryOp::CmpEq, z, Operand::value(k2), Operand::integer(0)));
  BranchTarget to_inner_hdr{inner_label, back_args};
  to_inner_hdr.args.push_back(Operand::value(k2));
  latch.term = Terminator::cond_br(Operand::value(z), BranchTarget{release_label, back_args}, std::move(to_inner_hdr));

  fn.blocks.push_back(std::move(enter));
  fn.blocks.push_back(std::move(inner));
  fn.blocks.push_back(std::move(release));
}

} // namespace

PassResult lock_coarsen(const Program& p, int chunk) {
  PassReport report;
  report.pass = "lock_coarsen";
  if (chunk < 1) chunk = 1;
  Program out = p;
  for (auto& fn : out.functions) {
    // Each rewrite changes the CFG, so re-analyze until nothing applies.
    std::set<std::string> done;
    for (bool again = true; again;) {
      again = false;
      Cfg cfg(fn);
      DominatorTree dom(cfg);
      auto loops = find_loops(cfg, dom);
      for (const auto& loop : loops) {
        const std::string label = cfg.label(loop.header);
        if (done.count(label)) continue;
        Candidate c;
        std::string why = analyze(fn, cfg, loop, loops, c);
        done.insert(label);
        if (!why.empty()) {
          bool has_monitor = false;
          for (int b : loop.blocks) {
            for (const auto& in : fn.blocks[static_cast<std::size_t>(b)].instrs) {
              has_monitor = has_monitor || in.op == Opcode::MonitorEnter;
            }
          }
          if (has_monitor) report.skipped.push_back({fn.name, label, why});
          continue;
        }
        rewrite(fn, c, chunk);
        ++report.rewrites;
        ++report.counters["monitor-pairs-coarsened"];
        report.details.push_back(fn.name + ": coarsened loop at " + label + " (chunk " + std::to_string(chunk) + ")");
        again = true;
        break;
      }
    }
  }
  return detail::finish(p, std::move(out), std::move(report));
}

} // namespace cirlab
