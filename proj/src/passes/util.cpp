#include "util.hpp"

#include "cirlab/cfg.hpp"

namespace cirlab::detail {

NameGen::NameGen(const Function& fn) {
  for (const auto& p : fn.params) values_.insert(p);
  for (const auto& b : fn.blocks) {
    labels_.insert(b.label);
    for (const auto& p : b.params) values_.insert(p);
    for (const auto& in : b.instrs) {
      if (in.has_result()) values_.insert(in.result);
    }
  }
}

std::string NameGen::fresh(std::unordered_set<std::string>& used, std::string_view base) {
  std::string stem(base);
  // Strip an earlier numeric suffix so names stay short after repeated rewrites.
  auto us = stem.rfind('_');
  if (us != std::string::npos && us + 1 < stem.size() &&
      stem.find_first_not_of("0123456789", us + 1) == std::string::npos) {
    stem.resize(us);
  }
  if (stem.empty()) stem = "t";
  for (int k = 1;; ++k) {
    std::string cand = stem + "_" + std::to_string(k);
    if (used.insert(cand).second) return cand;
  }
}

std::string NameGen::value(std::string_view base) { return fresh(values_, base); }
std::string NameGen::label(std::string_view base) { return fresh(labels_, base); }

std::unordered_map<std::string, DefSite> definition_sites(const Function& fn) {
  std::unordered_map<std::string, DefSite> out;
  for (const auto& p : fn.params) out[p] = {0, -2};
  for (std::size_t b = 0; b < fn.blocks.size(); ++b) {
    for (const auto& p : fn.blocks[b].params) out[p] = {static_cast<int>(b), -1};
    const auto& ins = fn.blocks[b].instrs;
    for (std::size_t i = 0; i < ins.size(); ++i) {
      if (ins[i].has_result()) out[ins[i].result] = {static_cast<int>(b), static_cast<int>(i)};
    }
  }
  return out;
}

std::unordered_map<std::string, int> use_counts(const Function& fn) {
  std::unordered_map<std::string, int> out;
  for (const auto& b : fn.blocks) {
    for (const auto& in : b.instrs) {
      for (const auto* op : instruction_uses(in)) {
        if (op->is_value()) ++out[op->name];
      }
    }
    if (b.term) {
      for (const auto* op : terminator_uses(*b.term)) {
        if (op->is_value()) ++out[op->name];
      }
    }
  }
  return out;
}

void substitute(Operand& op, const std::unordered_map<std::string, Operand>& map) {
  if (!op.is_value()) return;
  auto it = map.find(op.name);
  if (it != map.end()) op = it->second;
}

void substitute(Instruction& in, const std::unordered_map<std::string, Operand>& map) {
  for (auto* op : instruction_uses(in)) substitute(*op, map);
}

void substitute(Terminator& t, const std::unordered_map<std::string, Operand>& map) {
  for (auto* op : terminator_uses(t)) substitute(*op, map);
}

bool eliminate_dead_code(Function& fn) {
  bool changed = false;
  {
    Cfg cfg(fn);
    std::vector<BasicBlock> kept;
    for (std::size_t b = 0; b < fn.blocks.size(); ++b) {
      if (cfg.reachable(static_cast<int>(b))) {
        kept.push_back(std::move(fn.blocks[b]));
      } else {
        changed = true;
      }
    }
    fn.blocks = std::move(kept);
  }
  for (bool again = true; again;) {
    again = false;
    auto uses = use_counts(fn);
    for (auto& b : fn.blocks) {
      std::vector<Instruction> kept;
      kept.reserve(b.instrs.size());
      for (auto& in : b.instrs) {
        if (is_removable(in) && in.has_result() && uses[in.result] == 0) {
          again = changed = true;
          continue;
        }
        kept.push_back(std::move(in));
      }
      b.instrs = std::move(kept);
    }
  }
  return changed;
}

std::unordered_set<std::string> defined_in(const Function& fn, const std::vector<int>& blocks) {
  std::unordered_set<std::string> out;
  for (int bi : blocks) {
    const auto& b = fn.blocks[static_cast<std::size_t>(bi)];
    out.insert(b.params.begin(), b.params.end());
    for (const auto& in : b.instrs) {
      if (in.has_result()) out.insert(in.result);
    }
  }
  return out;
}

Instruction make_instr(Opcode op, std::string result, std::vector<Operand> operands) {
  Instruction in;
  in.op = op;
  in.result = std::move(result);
  in.operands = std::move(operands);
  return in;
}

Instruction make_binary(BinaryOp op, std::string result, Operand a, Operand b) {
  Instruction in = make_instr(Opcode::Binary, std::move(result), {std::move(a), std::move(b)});
  in.binop = op;
  return in;
}

PassResult finish(const Program& before, Program after, PassReport report) {
  report.instructions_before = before.instruction_count();
  if (report.rewrites == 0) after = before;
  report.instructions_after = after.instruction_count();
  return {std::move(after), std::move(report)};
}

bool is_subclass(const Program& p, const std::string& cls, const std::string& ancestor) {
  std::set<std::string> seen;
  const ClassDef* c = p.find_class(cls);
  while (c && seen.insert(c->name).second) {
    if (c->name == ancestor) return true;
    c = c->superclass ? p.find_class(*c->superclass) : nullptr;
  }
  return false;
}

} // namespace cirlab::detail
