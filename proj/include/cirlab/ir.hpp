#pragma once

// Guest IR: a small concurrent, object-oriented, single-assignment IR.
//
// Values flowing through the IR are named SSA values; control-flow merges use
// block parameters instead of phi nodes. A Program is a plain value type: passes
// never mutate their input, they build a new Program.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cirlab {

enum class Opcode : std::uint8_t {
  Const,
  Mov,
  Binary,
  Select,
  New,
  NewArray,
  ArrayLength,
  GetField,
  PutField,
  ArrayLoad,
  ArrayStore,
  Cas,
  MonitorEnter,
  MonitorExit,
  Wait,
  Notify,
  NotifyAll,
  Park,
  Unpark,
  Guard,
  InstanceOf,
  Call,
  CallVirtual,
  HandleConst,
  CallHandle,
  Output,
  VectorBinary,
};

inline constexpr std::size_t kOpcodeCount = static_cast<std::size_t>(Opcode::VectorBinary) + 1;

enum class BinaryOp : std::uint8_t { Add, Sub, Mul, Div, Mod, And, Or, CmpLt, CmpLe, CmpEq, CmpNe };

std::string_view opcode_name(Opcode op);
std::string_view binary_op_name(BinaryOp op);
std::optional<Opcode> opcode_from_name(std::string_view name);
std::optional<BinaryOp> binary_op_from_name(std::string_view name);

/// An instruction operand: either a named SSA value, an immediate, or a
/// reference to a program-level global.
struct Operand {
  enum class Kind : std::uint8_t { Value, Int, Bool, Null, Global };

  Kind kind = Kind::Null;
  std::string name;     // Value / Global
  std::int64_t imm = 0; // Int / Bool

  static Operand value(std::string n) { return {Kind::Value, std::move(n), 0}; }
  static Operand integer(std::int64_t v) { return {Kind::Int, {}, v}; }
  static Operand boolean(bool b) { return {Kind::Bool, {}, b ? 1 : 0}; }
  static Operand null() { return {Kind::Null, {}, 0}; }
  static Operand global(std::string n) { return {Kind::Global, std::move(n), 0}; }

  bool is_value() const { return kind == Kind::Value; }
  bool is_immediate() const { return kind == Kind::Int || kind == Kind::Bool || kind == Kind::Null; }

  friend bool operator==(const Operand&, const Operand&) = default;
  friend auto operator<=>(const Operand&, const Operand&) = default;
};

struct Instruction {
  Opcode op = Opcode::Const;
  std::string result;            // empty when the instruction produces nothing
  std::vector<Operand> operands;
  BinaryOp binop = BinaryOp::Add; // Binary, VectorBinary
  // New/InstanceOf: class. GetField/PutField/Cas: owner class.
  // Call/HandleConst: function. CallVirtual: method. Guard: reason tag.
  std::string symbol;
  std::string field;             // GetField/PutField/Cas
  std::int64_t width = 0;        // VectorBinary

  bool has_result() const { return !result.empty(); }

  friend bool operator==(const Instruction&, const Instruction&) = default;
};

struct BranchTarget {
  std::string label;
  std::vector<Operand> args;

  friend bool operator==(const BranchTarget&, const BranchTarget&) = default;
};

struct Terminator {
  enum class Kind : std::uint8_t { Br, CondBr, Return };

  Kind kind = Kind::Return;
  Operand cond;                 // CondBr
  BranchTarget on_true;         // Br target, or CondBr true edge
  BranchTarget on_false;        // CondBr false edge
  std::optional<Operand> value; // Return

  static Terminator br(BranchTarget t) {
    Terminator term;
    term.kind = Kind::Br;
    term.on_true = std::move(t);
    return term;
  }
  static Terminator cond_br(Operand c, BranchTarget t, BranchTarget f) {
    Terminator term;
    term.kind = Kind::CondBr;
    term.cond = std::move(c);
    term.on_true = std::move(t);
    term.on_false = std::move(f);
    return term;
  }
  static Terminator ret(std::optional<Operand> v = std::nullopt) {
    Terminator term;
    term.kind = Kind::Return;
    term.value = std::move(v);
    return term;
  }

  friend bool operator==(const Terminator&, const Terminator&) = default;
};

struct BasicBlock {
  std::string label;
  std::vector<std::string> params;
  std::vector<Instruction> instrs;
  std::optional<Terminator> term; // absent only in malformed programs

  friend bool operator==(const BasicBlock&, const BasicBlock&) = default;
};

/// The first block is the entry block.
struct Function {
  std::string name;
  std::vector<std::string> params;
  std::vector<BasicBlock> blocks;

  const BasicBlock* find_block(std::string_view label) const;
  BasicBlock* find_block(std::string_view label);
  std::size_t instruction_count() const;

  friend bool operator==(const Function&, const Function&) = default;
};

struct ClassDef {
  std::string name;
  std::optional<std::string> superclass;
  std::vector<std::string> fields;
  std::vector<std::string> methods; // implemented by the function "<Class>.<method>"

  friend bool operator==(const ClassDef&, const ClassDef&) = default;
};

/// A pre-allocated shared object (`global g = new C`) or array
/// (`global g = newarray N`), created in declaration order at program start.
struct GlobalDef {
  std::string name;
  std::optional<std::string> class_name; // object global
  std::int64_t array_length = 0;         // array global when class_name is empty

  friend bool operator==(const GlobalDef&, const GlobalDef&) = default;
};

struct ThreadSpec {
  std::string function;
  std::vector<Operand> args; // immediates or globals

  friend bool operator==(const ThreadSpec&, const ThreadSpec&) = default;
};

struct Program {
  std::vector<ClassDef> classes;
  std::vector<GlobalDef> globals;
  std::vector<Function> functions;
  std::vector<ThreadSpec> threads;

  const ClassDef* find_class(std::string_view name) const;
  const Function* find_function(std::string_view name) const;
  Function* find_function(std::string_view name);
  const GlobalDef* find_global(std::string_view name) const;
  std::size_t instruction_count() const;

  friend bool operator==(const Program&, const Program&) = default;
};

std::string method_function_name(std::string_view class_name, std::string_view method);

/// True when the instruction has no effect beyond defining its result, so it
/// may be removed once unused or duplicated freely. Division and modulo are
/// excluded because they can fault.
bool is_removable(const Instruction& instr);

/// Successor labels of a terminator, in edge order (true edge first).
std::vector<std::string> successors(const Terminator& term);

/// All operands read by an instruction.
std::vector<const Operand*> instruction_uses(const Instruction& instr);
std::vector<Operand*> instruction_uses(Instruction& instr);
std::vector<const Operand*> terminator_uses(const Terminator& term);
std::vector<Operand*> terminator_uses(Terminator& term);

} // namespace cirlab
