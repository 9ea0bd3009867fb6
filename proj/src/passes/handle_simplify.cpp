// Method-handle simplification.
//
// A callhandle whose handle is a handleconst (possibly through movs) becomes a
// direct call. Calls produced this way are then inlined when the callee is
// small and not recursive. Both steps repeat, since inlined bodies may expose
// further constant handles.

#include <algorithm>

#include "cirlab/passes.hpp"
#include "util.hpp"

namespace cirlab {

namespace {

using detail::NameGen;

constexpr int kMaxRounds = 8;

std::optional<std::string> constant_handle(const Function& fn, const Operand& op) {
  auto defs = detail::definition_sites(fn);
  Operand cur = op;
  for (std::size_t hops = 0; cur.is_value() && hops <= defs.size(); ++hops) {
    auto it = defs.find(cur.name);
    if (it == defs.end() || it->second.index < 0) return std::nullopt;
    const Instruction& in = fn.blocks[static_cast<std::size_t>(it->second.block)].instrs[static_cast<std::size_t>(it->second.index)];
    if (in.op == Opcode::HandleConst) return in.symbol;
    if (in.op != Opcode::Mov) return std::nullopt;
    cur = in.operands[0];
  }
  return std::nullopt;
}

std::set<std::string> recursive_functions(const Program& p) {
  std::map<std::string, std::set<std::string>> calls;
  for (const auto& fn : p.functions) {
    auto& out = calls[fn.name];
    for (const auto& b : fn.blocks) {
      for (const auto& in : b.instrs) {
        if (in.op == Opcode::Call) out.insert(in.symbol);
      }
    }
  }
  std::set<std::string> rec;
  for (const auto& fn : p.functions) {
    std::set<std::string> seen;
    std::vector<std::string> work(calls[fn.name].begin(), calls[fn.name].end());
    while (!work.empty()) {
      std::string f = work.back();
      work.pop_back();
      if (f == fn.name) {
        rec.insert(fn.name);
        break;
      }
      if (!seen.insert(f).second) continue;
      for (const auto& g : calls[f]) work.push_back(g);
    }
  }
  return rec;
}

// Replaces the call at (block, index) with a renamed copy of the callee body.
void inline_call(Function& fn, std::size_t block, std::size_t index, const Function& callee) {
  NameGen names(fn);
  BasicBlock& site = fn.blocks[block];
  const Instruction call = site.instrs[index];

  std::unordered_map<std::string, Operand> rename;
  std::unordered_map<std::string, std::string> relabel;
  for (const auto& prm : callee.params) rename[prm] = Operand::value(names.value(prm));
  for (const auto& b : callee.blocks) {
    relabel[b.label] = names.label(callee.name + "_" + b.label);
    for (const auto& prm : b.params) rename[prm] = Operand::value(names.value(prm));
    for (const auto& in : b.instrs) {
      if (in.has_result()) rename[in.result] = Operand::value(names.value(in.result));
    }
  }
  const std::string cont_label = names.label(site.label + "_cont");

  BasicBlock cont;
  cont.label = cont_label;
  if (call.has_result()) cont.params.push_back(call.result);
  cont.instrs.assign(site.instrs.begin() + static_cast<std::ptrdiff_t>(index) + 1, site.instrs.end());
  cont.term = site.term;

  std::vector<BasicBlock> body;
  for (const auto& b : callee.blocks) {
    BasicBlock copy;
    copy.label = relabel.at(b.label);
    for (const auto& prm : b.params) copy.params.push_back(rename.at(prm).name);
    for (const auto& in : b.instrs) {
      Instruction c = in;
      detail::substitute(c, rename);
      if (c.has_result()) c.result = rename.at(c.result).name;
      copy.instrs.push_back(std::move(c));
    }
    Terminator t = *b.term;
    detail::substitute(t, rename);
    if (t.kind == Terminator::Kind::Return) {
      BranchTarget back{cont_label, {}};
      if (call.has_result()) back.args.push_back(t.value.value_or(Operand::null()));
      t = Terminator::br(std::move(back));
    } else {
      t.on_true.label = relabel.at(t.on_true.label);
      if (t.kind == Terminator::Kind::CondBr) t.on_false.label = relabel.at(t.on_false.label);
    }
    copy.term = std::move(t);
    body.push_back(std::move(copy));
  }

  site.instrs.resize(index);
  for (std::size_t k = 0; k < callee.params.size(); ++k) {
    site.instrs.push_back(detail::make_instr(Opcode::Mov, rename.at(callee.params[k]).name, {call.operands[k]}));
  }
  site.term = Terminator::br(BranchTarget{relabel.at(callee.blocks.front().label), {}});

  auto pos = fn.blocks.begin() + static_cast<std::ptrdiff_t>(block) + 1;
  pos = fn.blocks.insert(pos, std::make_move_iterator(body.begin()), std::make_move_iterator(body.end()));
  fn.blocks.insert(pos + static_cast<std::ptrdiff_t>(body.size()), std::move(cont));
}

} // namespace

PassResult handle_simplify(const Program& p, int inline_budget) {
  PassReport report;
  report.pass = "handle_simplify";
  Program out = p;
  const auto recursive = recursive_functions(p);
  for (std::size_t f = 0; f < out.functions.size(); ++f) {
    int devirtualized = 0;
    int inlined = 0;
    for (int round = 0; round < kMaxRounds; ++round) {
      Function& fn = out.functions[f];
      // Sites turned into direct calls this round, by block label and index.
      std::vector<std::pair<std::string, std::size_t>> fresh;
      for (auto& b : fn.blocks) {
        for (std::size_t i = 0; i < b.instrs.size(); ++i) {
          Instruction& in = b.instrs[i];
          if (in.op != Opcode::CallHandle) continue;
          auto target = constant_handle(fn, in.operands[0]);
          if (!target) continue;
          const Function* callee = p.find_function(*target);
          if (!callee || callee->params.size() + 1 != in.operands.size()) continue;
          in.op = Opcode::Call;
          in.symbol = *target;
          in.operands.erase(in.operands.begin());
          ++devirtualized;
          fresh.emplace_back(b.label, i);
        }
      }
      if (fresh.empty()) break;
      // Later sites first so earlier indices stay valid within a block.
      std::reverse(fresh.begin(), fresh.end());
      for (const auto& [label, index] : fresh) {
        const Instruction& call = fn.find_block(label)->instrs[index];
        const Function* callee = p.find_function(call.symbol);
        if (callee->name == fn.name || recursive.count(callee->name)) continue;
        if (callee->instruction_count() > static_cast<std::size_t>(inline_budget)) continue;
        std::size_t bi = static_cast<std::size_t>(fn.find_block(label) - fn.blocks.data());
        inline_call(fn, bi, index, *callee);
        ++inlined;
      }
    }
    if (devirtualized == 0) continue;
    Function& fn = out.functions[f];
    detail::eliminate_dead_code(fn);
    report.rewrites += devirtualized + inlined;
    report.counters["callsites-devirtualized"] += devirtualized;
    report.counters["bodies-inlined"] += inlined;
    report.details.push_back(fn.name + ": " + std::to_string(devirtualized) + " handle callsites devirtualized, " +
                             std::to_string(inlined) + " inlined");
  }
  return detail::finish(p, std::move(out), std::move(report));
}

} // namespace cirlab
