// Partial escape analysis with atomic operations.
//
// Works one basic block at a time. Allocations become virtual objects whose
// fields are tracked as operands; loads, stores, instanceof and CAS on a
// virtual object are folded. An object that escapes is materialized right
// before the escaping instruction, initialized with its current field values.

#include <algorithm>

#include "cirlab/passes.hpp"
#include "util.hpp"

namespace cirlab {

namespace {

using detail::NameGen;

struct VirtualObject {
  std::string orig; // result name of the original allocation
  std::string cls;
  std::vector<std::string> field_order; // first-write order
  std::map<std::string, Operand> fields;
  std::map<std::string, std::string> owners; // field -> owner class named by the write
  std::vector<std::string> aliases;
  bool materialized = false;
};

class BlockRewriter {
 public:
  BlockRewriter(const Program& prog, NameGen& names, const std::unordered_set<std::string>& used_elsewhere)
      : prog_(prog), names_(names), used_elsewhere_(used_elsewhere) {}

  int allocations_removed = 0;
  int cas_folded = 0;
  int loads_folded = 0;

  std::vector<Instruction> rewrite(const BasicBlock& b, Terminator& term) {
    for (const auto& in : b.instrs) visit(in);
    for (auto* op : terminator_uses(term)) escape(*op);
    for (std::size_t i = 0; i < objects_.size(); ++i) {
      if (objects_[i].materialized) continue;
      bool live_out = used_elsewhere_.count(objects_[i].orig) != 0;
      for (const auto& a : objects_[i].aliases) live_out = live_out || used_elsewhere_.count(a) != 0;
      if (live_out) materialize(static_cast<int>(i));
    }
    for (const auto& o : objects_) {
      if (!o.materialized) ++allocations_removed;
    }
    return std::move(out_);
  }

 private:
  const Program& prog_;
  NameGen& names_;
  const std::unordered_set<std::string>& used_elsewhere_;
  std::vector<VirtualObject> objects_;
  std::unordered_map<std::string, int> virtual_of_;
  std::unordered_map<std::string, Operand> copies_;
  std::vector<Instruction> out_;

  int virt(const Operand& op) const {
    if (!op.is_value()) return -1;
    auto it = virtual_of_.find(op.name);
    return it == virtual_of_.end() ? -1 : it->second;
  }

  Operand resolve(Operand op) const {
    while (op.is_value()) {
      auto it = copies_.find(op.name);
      if (it == copies_.end()) break;
      op = it->second;
    }
    return op;
  }

  void escape(const Operand& op) {
    int v = virt(op);
    if (v >= 0) materialize(v);
  }

  void collect(int v, std::vector<int>& order) {
    VirtualObject& o = objects_[static_cast<std::size_t>(v)];
    if (o.materialized) return;
    o.materialized = true;
    for (const auto& f : o.field_order) {
      int w = virt(o.fields[f]);
      if (w >= 0) collect(w, order);
    }
    order.push_back(v);
  }

  // Emits allocations first, then field initialization, then alias copies,
  // so reference cycles among the escaping objects are handled.
  void materialize(int v) {
    std::vector<int> order;
    collect(v, order);
    for (int w : order) {
      Instruction alloc = detail::make_instr(Opcode::New, objects_[static_cast<std::size_t>(w)].orig, {});
      alloc.symbol = objects_[static_cast<std::size_t>(w)].cls;
      out_.push_back(std::move(alloc));
    }
    for (int w : order) {
      const VirtualObject& o = objects_[static_cast<std::size_t>(w)];
      for (const auto& f : o.field_order) {
        Operand val = o.fields.at(f);
        int x = virt(val);
        if (x >= 0) val = Operand::value(objects_[static_cast<std::size_t>(x)].orig);
        Instruction put = detail::make_instr(Opcode::PutField, "", {Operand::value(o.orig), val});
        put.symbol = o.owners.at(f);
        put.field = f;
        out_.push_back(std::move(put));
      }
    }
    for (int w : order) {
      const VirtualObject& o = objects_[static_cast<std::size_t>(w)];
      for (const auto& a : o.aliases) out_.push_back(detail::make_instr(Opcode::Mov, a, {Operand::value(o.orig)}));
    }
    for (int w : order) {
      const VirtualObject& o = objects_[static_cast<std::size_t>(w)];
      virtual_of_.erase(o.orig);
      for (const auto& a : o.aliases) virtual_of_.erase(a);
    }
  }

  void alias(const std::string& name, int v) {
    if (name.empty()) return;
    objects_[static_cast<std::size_t>(v)].aliases.push_back(name);
    virtual_of_[name] = v;
  }

  void write_field(int v, const std::string& owner, const std::string& field, Operand val) {
    VirtualObject& o = objects_[static_cast<std::size_t>(v)];
    if (o.fields.count(field) == 0) o.field_order.push_back(field);
    o.fields[field] = std::move(val);
    o.owners[field] = owner;
  }

  Operand read_field(int v, const std::string& field) const {
    const VirtualObject& o = objects_[static_cast<std::size_t>(v)];
    auto it = o.fields.find(field);
    return it == o.fields.end() ? Operand::integer(0) : it->second;
  }

  // Statically decides whether two operands hold the same value.
  std::optional<bool> same_value(const Operand& a, const Operand& b) const {
    int va = virt(a);
    int vb = virt(b);
    // A virtual object is unreachable from anything but its own names.
    if (va >= 0 || vb >= 0) return va == vb;
    Operand ra = resolve(a);
    Operand rb = resolve(b);
    if (ra == rb) return true;
    if (ra.is_immediate() && rb.is_immediate()) return false;
    return std::nullopt;
  }

  void visit(const Instruction& in) {
    switch (in.op) {
      case Opcode::New: {
        VirtualObject o;
        o.orig = in.result;
        o.cls = in.symbol;
        objects_.push_back(std::move(o));
        if (!in.result.empty()) virtual_of_[in.result] = static_cast<int>(objects_.size() - 1);
        return;
      }
      case Opcode::Mov: {
        int v = virt(in.operands[0]);
        if (v >= 0) {
          alias(in.result, v);
          return;
        }
        break;
      }
      case Opcode::GetField: {
        int v = virt(in.operands[0]);
        if (v < 0) break;
        ++loads_folded;
        Operand val = read_field(v, in.field);
        int w = virt(val);
        if (w >= 0) {
          alias(in.result, w);
        } else if (!in.result.empty()) {
          copies_[in.result] = val;
          out_.push_back(detail::make_instr(Opcode::Mov, in.result, {val}));
        }
        return;
      }
      case Opcode::PutField: {
        int v = virt(in.operands[0]);
        if (v < 0) break;
        write_field(v, in.symbol, in.field, in.operands[1]);
        return;
      }
      case Opcode::Cas: {
        int v = virt(in.operands[0]);
        if (v < 0) break;
        ++cas_folded;
        const Operand cur = read_field(v, in.field);
        const Operand& expect = in.operands[1];
        const Operand& next = in.operands[2];
        std::string ok = in.result.empty() ? names_.value("cas_ok") : in.result;
        if (auto same = same_value(cur, expect)) {
          if (*same) write_field(v, in.symbol, in.field, next);
          out_.push_back(detail::make_instr(Opcode::Const, ok, {Operand::boolean(*same)}));
          return;
        }
        escape(next);
        out_.push_back(detail::make_binary(BinaryOp::CmpEq, ok, cur, expect));
        std::string merged = names_.value(in.field);
        out_.push_back(detail::make_instr(Opcode::Select, merged, {Operand::value(ok), next, cur}));
        write_field(v, in.symbol, in.field, Operand::value(merged));
        return;
      }
      case Opcode::InstanceOf: {
        int v = virt(in.operands[0]);
        if (v < 0) break;
        bool r = detail::is_subclass(prog_, objects_[static_cast<std::size_t>(v)].cls, in.symbol);
        out_.push_back(detail::make_instr(Opcode::Const, in.result, {Operand::boolean(r)}));
        return;
      }
      default:
        break;
    }
    for (const auto* op : instruction_uses(in)) escape(*op);
    out_.push_back(in);
  }
};

std::unordered_set<std::string> names_used_outside(const Function& fn, std::size_t block) {
  std::unordered_set<std::string> out;
  for (std::size_t b = 0; b < fn.blocks.size(); ++b) {
    if (b == block) continue;
    for (const auto& in : fn.blocks[b].instrs) {
      for (const auto* op : instruction_uses(in)) {
        if (op->is_value()) out.insert(op->name);
      }
    }
    if (fn.blocks[b].term) {
      for (const auto* op : terminator_uses(*fn.blocks[b].term)) {
        if (op->is_value()) out.insert(op->name);
      }
    }
  }
  return out;
}

} // namespace

PassResult pea_atomic(const Program& p) {
  PassReport report;
  report.pass = "pea_atomic";
  Program out = p;
  for (auto& fn : out.functions) {
    NameGen names(fn);
    bool changed = false;
    int removed = 0;
    int folded = 0;
    for (std::size_t b = 0; b < fn.blocks.size(); ++b) {
      BasicBlock& block = fn.blocks[b];
      if (!block.term) continue;
      bool has_alloc = std::any_of(block.instrs.begin(), block.instrs.end(),
                                   [](const Instruction& in) { return in.op == Opcode::New; });
      if (!has_alloc) continue;
      auto elsewhere = names_used_outside(fn, b);
      BlockRewriter rw(p, names, elsewhere);
      Terminator term = *block.term;
      auto instrs = rw.rewrite(block, term);
      if (rw.allocations_removed == 0 && rw.cas_folded == 0) continue;
      block.instrs = std::move(instrs);
      changed = true;
      removed += rw.allocations_removed;
      folded += rw.cas_folded;
      report.counters["loads-folded"] += rw.loads_folded;
    }
    if (!changed) continue;
    detail::eliminate_dead_code(fn);
    report.rewrites += removed + folded;
    report.counters["allocations-removed"] += removed;
    report.counters["cas-folded"] += folded;
    report.details.push_back(fn.name + ": " + std::to_string(removed) + " allocations removed, " +
                             std::to_string(folded) + " CAS folded");
  }
  return detail::finish(p, std::move(out), std::move(report));
}

} // namespace cirlab
