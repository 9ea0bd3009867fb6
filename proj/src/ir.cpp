#include "cirlab/ir.hpp"

#include <array>

namespace cirlab {

namespace {

constexpr std::array<std::string_view, kOpcodeCount> kOpcodeNames = {
    "const",    "mov",         "binary",      "select",     "new",        "newarray",   "alen",
    "getfield", "putfield",    "aload",       "astore",     "cas",        "monitorenter",
    "monitorexit", "wait",     "notify",      "notifyall",  "park",       "unpark",     "guard",
    "instanceof", "call",      "callvirtual", "handleconst", "callhandle", "output",    "vbinop",
};

constexpr std::array<std::string_view, 11> kBinaryNames = {
    "add", "sub", "mul", "div", "mod", "and", "or", "cmplt", "cmple", "cmpeq", "cmpne",
};

template <typename T>
std::vector<T*> collect_uses(std::vector<Operand>& operands) {
  std::vector<T*> out;
  out.reserve(operands.size());
  for (auto& op : operands) out.push_back(&op);
  return out;
}

} // namespace

std::string_view opcode_name(Opcode op) { return kOpcodeNames[static_cast<std::size_t>(op)]; }

std::string_view binary_op_name(BinaryOp op) { return kBinaryNames[static_cast<std::size_t>(op)]; }

std::optional<Opcode> opcode_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kOpcodeNames.size(); ++i) {
    if (kOpcodeNames[i] == name && name != "binary") return static_cast<Opcode>(i);
  }
  return std::nullopt;
}

std::optional<BinaryOp> binary_op_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kBinaryNames.size(); ++i) {
    if (kBinaryNames[i] == name) return static_cast<BinaryOp>(i);
  }
  return std::nullopt;
}

const BasicBlock* Function::find_block(std::string_view label) const {
  for (const auto& b : blocks) {
    if (b.label == label) return &b;
  }
  return nullptr;
}

BasicBlock* Function::find_block(std::string_view label) {
  for (auto& b : blocks) {
    if (b.label == label) return &b;
  }
  return nullptr;
}

std::size_t Function::instruction_count() const {
  std::size_t n = 0;
  for (const auto& b : blocks) n += b.instrs.size();
  return n;
}

const ClassDef* Program::find_class(std::string_view name) const {
  for (const auto& c : classes) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

const Function* Program::find_function(std::string_view name) const {
  for (const auto& f : functions) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

Function* Program::find_function(std::string_view name) {
  for (auto& f : functions) {
    if (f.name == name) return &f;
  }
  return nullptr;
}

const GlobalDef* Program::find_global(std::string_view name) const {
  for (const auto& g : globals) {
    if (g.name == name) return &g;
  }
  return nullptr;
}

std::size_t Program::instruction_count() const {
  std::size_t n = 0;
  for (const auto& f : functions) n += f.instruction_count();
  return n;
}

std::string method_function_name(std::string_view class_name, std::string_view method) {
  std::string out(class_name);
  out += '.';
  out += method;
  return out;
}

bool is_removable(const Instruction& instr) {
  switch (instr.op) {
    case Opcode::Const:
    case Opcode::Mov:
    case Opcode::Select:
    case Opcode::InstanceOf:
    case Opcode::HandleConst:
    case Opcode::ArrayLength:
      return true;
    case Opcode::Binary:
      return instr.binop != BinaryOp::Div && instr.binop != BinaryOp::Mod;
    default:
      return false;
  }
}

std::vector<std::string> successors(const Terminator& term) {
  switch (term.kind) {
    case Terminator::Kind::Br:
      return {term.on_true.label};
    case Terminator::Kind::CondBr:
      return {term.on_true.label, term.on_false.label};
    case Terminator::Kind::Return:
      return {};
  }
  return {};
}

std::vector<const Operand*> instruction_uses(const Instruction& instr) {
  std::vector<const Operand*> out;
  out.reserve(instr.operands.size());
  for (const auto& op : instr.operands) out.push_back(&op);
  return out;
}

std::vector<Operand*> instruction_uses(Instruction& instr) { return collect_uses<Operand>(instr.operands); }

std::vector<const Operand*> terminator_uses(const Terminator& term) {
  std::vector<const Operand*> out;
  if (term.kind == Terminator::Kind::CondBr) out.push_back(&term.cond);
  if (term.kind == Terminator::Kind::Return) {
    if (term.value) out.push_back(&*term.value);
    return out;
  }
  for (const auto& a : term.on_true.args) out.push_back(&a);
  if (term.kind == Terminator::Kind::CondBr) {
    for (const auto& a : term.on_false.args) out.push_back(&a);
  }
  return out;
}

std::vector<Operand*> terminator_uses(Terminator& term) {
  std::vector<Operand*> out;
  if (term.kind == Terminator::Kind::CondBr) out.push_back(&term.cond);
  if (term.kind == Terminator::Kind::Return) {
    if (term.value) out.push_back(&*term.value);
    return out;
  }
  for (auto& a : term.on_true.args) out.push_back(&a);
  if (term.kind == Terminator::Kind::CondBr) {
    for (auto& a : term.on_false.args) out.push_back(&a);
  }
  return out;
}

} // namespace cirlab
