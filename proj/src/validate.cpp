#include "cirlab/validate.hpp"

#include <set>
#include <unordered_map>
#include <unordered_set>

#include "cirlab/cfg.hpp"

namespace cirlab {

namespace {

class Validator {
 public:
  explicit Validator(const Program& p) : p_(p) {}

  std::vector<Diagnostic> run() {
    check_classes();
    check_globals();
    index_functions();
    for (const auto& f : p_.functions) check_function(f);
    check_threads();
    return std::move(out_);
  }

 private:
  const Program& p_;
  std::vector<Diagnostic> out_;
  std::unordered_map<std::string, const ClassDef*> classes_;
  std::unordered_map<std::string, const Function*> functions_;
  std::unordered_set<std::string> method_names_;

  void resolution(std::string msg) { out_.push_back({Diagnostic::Kind::Resolution, std::move(msg)}); }
  void structure(std::string msg) { out_.push_back({Diagnostic::Kind::Structure, std::move(msg)}); }

  // Ancestor chain starting at `name`, stopping at unknown classes or cycles.
  std::vector<const ClassDef*> chain(const std::string& name) const {
    std::vector<const ClassDef*> out;
    std::set<std::string> seen;
    auto it = classes_.find(name);
    while (it != classes_.end() && seen.insert(it->first).second) {
      out.push_back(it->second);
      if (!it->second->superclass) break;
      it = classes_.find(*it->second->superclass);
    }
    return out;
  }

  bool field_declared(const std::string& owner, const std::string& field) const {
    for (const ClassDef* c : chain(owner)) {
      for (const auto& f : c->fields) {
        if (f == field) return true;
      }
    }
    return false;
  }

  void check_classes() {
    for (const auto& c : p_.classes) {
      if (!classes_.emplace(c.name, &c).second) structure("duplicate class '" + c.name + "'");
      for (const auto& m : c.methods) method_names_.insert(m);
    }
    for (const auto& c : p_.classes) {
      if (c.superclass && classes_.count(*c.superclass) == 0) {
        resolution("class '" + c.name + "' extends unknown class '" + *c.superclass + "'");
      }
      // Acyclicity: walking up from c must not revisit c.
      std::set<std::string> seen{c.name};
      const ClassDef* cur = &c;
      while (cur->superclass) {
        auto it = classes_.find(*cur->superclass);
        if (it == classes_.end()) break;
        if (!seen.insert(it->first).second) {
          if (it->first == c.name) structure("class '" + c.name + "' is part of an inheritance cycle");
          break;
        }
        cur = it->second;
      }
      std::set<std::string> fields;
      for (const auto& f : c.fields) {
        if (!fields.insert(f).second) structure("class '" + c.name + "' declares field '" + f + "' twice");
      }
      if (c.superclass) {
        for (const auto& f : c.fields) {
          if (field_declared(*c.superclass, f)) {
            structure("class '" + c.name + "' redeclares inherited field '" + f + "'");
          }
        }
      }
      std::set<std::string> methods;
      for (const auto& m : c.methods) {
        if (!methods.insert(m).second) structure("class '" + c.name + "' declares method '" + m + "' twice");
        if (!p_.find_function(method_function_name(c.name, m))) {
          resolution("method '" + m + "' of class '" + c.name + "' has no function '" +
                     method_function_name(c.name, m) + "'");
        }
      }
    }
  }

  void check_globals() {
    std::set<std::string> names;
    for (const auto& g : p_.globals) {
      if (!names.insert(g.name).second) structure("duplicate global '" + g.name + "'");
      if (g.class_name && classes_.count(*g.class_name) == 0) {
        resolution("global '" + g.name + "' has unknown class '" + *g.class_name + "'");
      }
      if (!g.class_name && g.array_length < 0) structure("global '" + g.name + "' has negative length");
    }
  }

  void index_functions() {
    for (const auto& f : p_.functions) {
      if (!functions_.emplace(f.name, &f).second) structure("duplicate function '" + f.name + "'");
    }
  }

  void check_operand_refs(const Operand& op, const std::string& where) {
    if (op.kind == Operand::Kind::Global && !p_.find_global(op.name)) {
      resolution(where + ": unknown global '@" + op.name + "'");
    }
  }

  void check_instruction(const Function& f, const BasicBlock& b, const Instruction& in) {
    const std::string where = "function '" + f.name + "' block '" + b.label + "'";
    for (const auto* op : instruction_uses(in)) check_operand_refs(*op, where);
    auto arity = [&](std::size_t n) {
      if (in.operands.size() != n) {
        structure(where + ": " + std::string(opcode_name(in.op)) + " expects " + std::to_string(n) + " operands");
      }
    };
    switch (in.op) {
      case Opcode::Const:
        arity(1);
        if (!in.operands.empty() && !in.operands[0].is_immediate()) structure(where + ": const needs a literal");
        break;
      case Opcode::Mov:
      case Opcode::NewArray:
      case Opcode::ArrayLength:
      case Opcode::MonitorEnter:
      case Opcode::MonitorExit:
      case Opcode::Wait:
      case Opcode::Notify:
      case Opcode::NotifyAll:
      case Opcode::Unpark:
      case Opcode::Output:
        arity(1);
        break;
      case Opcode::Binary:
      case Opcode::ArrayLoad:
        arity(2);
        break;
      case Opcode::Select:
      case Opcode::ArrayStore:
        arity(3);
        break;
      case Opcode::Park:
        arity(0);
        break;
      case Opcode::New:
      case Opcode::InstanceOf:
        arity(in.op == Opcode::New ? 0 : 1);
        if (classes_.count(in.symbol) == 0) resolution(where + ": unknown class '" + in.symbol + "'");
        break;
      case Opcode::GetField:
      case Opcode::PutField:
      case Opcode::Cas:
        arity(in.op == Opcode::GetField ? 1 : in.op == Opcode::PutField ? 2 : 3);
        if (classes_.count(in.symbol) == 0) {
          resolution(where + ": unknown class '" + in.symbol + "'");
        } else if (!field_declared(in.symbol, in.field)) {
          resolution(where + ": class '" + in.symbol + "' has no field '" + in.field + "'");
        }
        break;
      case Opcode::Guard:
        arity(1);
        if (!in.operands.empty()) {
          const auto& c = in.operands[0];
          if (c.kind != Operand::Kind::Value && c.kind != Operand::Kind::Bool) {
            structure(where + ": guard condition must be boolean");
          }
        }
        break;
      case Opcode::Call: {
        auto it = functions_.find(in.symbol);
        if (it == functions_.end()) {
          resolution(where + ": unknown function '" + in.symbol + "'");
        } else if (it->second->params.size() != in.operands.size()) {
          structure(where + ": call to '" + in.symbol + "' passes " + std::to_string(in.operands.size()) +
                    " arguments, expected " + std::to_string(it->second->params.size()));
        }
        break;
      }
      case Opcode::HandleConst:
        arity(0);
        if (functions_.count(in.symbol) == 0) resolution(where + ": unknown function '" + in.symbol + "'");
        break;
      case Opcode::CallVirtual:
        if (in.operands.empty()) structure(where + ": callvirtual needs a receiver");
        if (method_names_.count(in.symbol) == 0) resolution(where + ": no class declares method '" + in.symbol + "'");
        break;
      case Opcode::CallHandle:
        if (in.operands.empty()) structure(where + ": callhandle needs a handle");
        break;
      case Opcode::VectorBinary:
        arity(4);
        if (in.width < 2) structure(where + ": vbinop width must be at least 2");
        break;
    }
    bool produces = in.op != Opcode::PutField && in.op != Opcode::ArrayStore && in.op != Opcode::MonitorEnter &&
                    in.op != Opcode::MonitorExit && in.op != Opcode::Wait && in.op != Opcode::Notify &&
                    in.op != Opcode::NotifyAll && in.op != Opcode::Park && in.op != Opcode::Unpark &&
                    in.op != Opcode::Guard && in.op != Opcode::Output && in.op != Opcode::VectorBinary;
    bool optional = in.op == Opcode::Call || in.op == Opcode::CallVirtual || in.op == Opcode::CallHandle;
    if (!optional && produces && !in.has_result()) structure(where + ": " + std::string(opcode_name(in.op)) + " needs a result");
    if (!produces && in.has_result()) structure(where + ": " + std::string(opcode_name(in.op)) + " produces no value");
  }

  void check_target(const Function& f, const BasicBlock& b, const BranchTarget& t) {
    const BasicBlock* dest = f.find_block(t.label);
    if (!dest) {
      resolution("function '" + f.name + "' block '" + b.label + "': unknown block '" + t.label + "'");
      return;
    }
    if (dest->params.size() != t.args.size()) {
      structure("function '" + f.name + "' block '" + b.label + "': branch to '" + t.label + "' passes " +
                std::to_string(t.args.size()) + " arguments, expected " + std::to_string(dest->params.size()));
    }
    if (dest == &f.blocks.front()) {
      structure("function '" + f.name + "' block '" + b.label + "': branch to the entry block");
    }
  }

  void check_function(const Function& f) {
    const std::string fwhere = "function '" + f.name + "'";
    if (f.blocks.empty()) {
      structure(fwhere + " has no blocks");
      return;
    }
    if (!f.blocks.front().params.empty()) structure(fwhere + ": entry block takes no parameters");

    std::set<std::string> labels;
    for (const auto& b : f.blocks) {
      if (!labels.insert(b.label).second) structure(fwhere + ": duplicate block '" + b.label + "'");
    }

    // Single definition of every value; remember where each one is defined.
    struct Def {
      int block;
      int index; // -1 for parameters
    };
    std::unordered_map<std::string, Def> defs;
    auto define = [&](const std::string& name, int block, int index) {
      if (!defs.emplace(name, Def{block, index}).second) {
        structure(fwhere + ": value '" + name + "' is defined more than once");
      }
    };
    for (const auto& prm : f.params) define(prm, 0, -2);
    for (std::size_t bi = 0; bi < f.blocks.size(); ++bi) {
      const auto& b = f.blocks[bi];
      for (const auto& prm : b.params) define(prm, static_cast<int>(bi), -1);
      for (std::size_t ii = 0; ii < b.instrs.size(); ++ii) {
        if (b.instrs[ii].has_result()) define(b.instrs[ii].result, static_cast<int>(bi), static_cast<int>(ii));
      }
    }

    for (const auto& b : f.blocks) {
      for (const auto& in : b.instrs) check_instruction(f, b, in);
      if (!b.term) {
        structure(fwhere + ": block '" + b.label + "' has no terminator");
        continue;
      }
      const auto& t = *b.term;
      for (const auto* op : terminator_uses(t)) check_operand_refs(*op, fwhere + " block '" + b.label + "'");
      if (t.kind == Terminator::Kind::Br || t.kind == Terminator::Kind::CondBr) check_target(f, b, t.on_true);
      if (t.kind == Terminator::Kind::CondBr) check_target(f, b, t.on_false);
    }

    // Every use must be dominated by its definition.
    Cfg cfg(f);
    DominatorTree dom(cfg);
    auto check_use = [&](const Operand& op, int block, int index, const std::string& blabel) {
      if (!op.is_value()) return;
      auto it = defs.find(op.name);
      if (it == defs.end()) {
        structure(fwhere + " block '" + blabel + "': use of undefined value '" + op.name + "'");
        return;
      }
      const Def& d = it->second;
      if (d.index == -2) return; // function parameter
      bool ok = d.block == block ? d.index < index : dom.dominates(d.block, block);
      if (!ok) structure(fwhere + " block '" + blabel + "': value '" + op.name + "' is not defined on every path to its use");
    };
    for (std::size_t bi = 0; bi < f.blocks.size(); ++bi) {
      if (!cfg.reachable(static_cast<int>(bi))) continue;
      const auto& b = f.blocks[bi];
      for (std::size_t ii = 0; ii < b.instrs.size(); ++ii) {
        for (const auto* op : instruction_uses(b.instrs[ii])) {
          check_use(*op, static_cast<int>(bi), static_cast<int>(ii), b.label);
        }
      }
      if (b.term) {
        for (const auto* op : terminator_uses(*b.term)) {
          check_use(*op, static_cast<int>(bi), static_cast<int>(b.instrs.size()), b.label);
        }
      }
    }
  }

  void check_threads() {
    if (p_.threads.empty()) structure("program declares no threads");
    for (const auto& t : p_.threads) {
      auto it = functions_.find(t.function);
      if (it == functions_.end()) {
        resolution("thread entry '" + t.function + "' is not a function");
        continue;
      }
      if (it->second->params.size() != t.args.size()) {
        structure("thread entry '" + t.function + "' expects " + std::to_string(it->second->params.size()) +
                  " arguments");
      }
      for (const auto& a : t.args) {
        check_operand_refs(a, "thread '" + t.function + "'");
        if (a.is_value()) structure("thread '" + t.function + "' passes a non-literal argument");
      }
    }
  }
};

} // namespace

std::vector<Diagnostic> validate(const Program& program) { return Validator(program).run(); }

} // namespace cirlab
