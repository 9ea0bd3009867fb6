#include "cirlab/interpreter.hpp"

#include <algorithm>
#include <charconv>
#include <random>
#include <unordered_map>

#include "cirlab/error.hpp"

namespace cirlab {

struct COperand {
  enum class Kind : std::uint8_t { Local, Imm, Global };
  Kind kind = Kind::Imm;
  std::int32_t index = 0; // local slot or global index
  Value imm;
};

struct CEdge {
  std::int32_t pc = 0;
  std::vector<COperand> args;
  std::vector<std::int32_t> params;
};

namespace {

enum class ItemKind : std::uint8_t { Instr, Br, CondBr, Ret };

struct CItem {
  ItemKind kind = ItemKind::Instr;
  Opcode op = Opcode::Const;
  BinaryOp binop = BinaryOp::Add;
  std::int32_t result = -1;
  std::vector<COperand> ops;
  std::int32_t cls = -1;  // New, InstanceOf, field owner
  std::int32_t slot = -1; // field slot
  std::int32_t func = -1; // Call, HandleConst
  std::string symbol;     // CallVirtual method, Guard tag
  std::int64_t width = 0;
  std::int64_t cost = 1;
  CEdge on_true;
  CEdge on_false;
  bool has_value = false; // Ret
};

struct CFunction {
  std::string name;
  std::int32_t nparams = 0;
  std::int32_t nlocals = 0;
  std::vector<CItem> code;
};

struct CClass {
  std::string name;
  std::vector<std::string> layout;   // ancestors' fields first
  std::vector<bool> subclass_of;     // indexed by class id
  std::unordered_map<std::string, std::int32_t> methods; // name -> function, own or inherited
};

} // namespace

struct CompiledProgram {
  std::vector<CClass> classes;
  std::vector<CFunction> functions;
  std::vector<GlobalDef> globals;
  std::vector<std::int32_t> global_cls;
  std::vector<std::pair<std::int32_t, std::vector<COperand>>> threads;
};

std::string_view trace_status_name(TraceStatus s) {
  switch (s) {
    case TraceStatus::Terminated:
      return "terminated";
    case TraceStatus::Deopt:
      return "deopt";
    case TraceStatus::BudgetExhausted:
      return "step-budget-exhausted";
    case TraceStatus::Deadlock:
      return "deadlock";
    case TraceStatus::Fault:
      return "fault";
  }
  return "?";
}

std::string format_trace(const ResultTrace& trace) {
  std::string out = "[";
  for (std::size_t i = 0; i < trace.events.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(trace.events[i]);
  }
  out += "] ";
  out += trace_status_name(trace.status);
  if (!trace.reason.empty()) out += "(" + trace.reason + ")";
  return out;
}

std::int64_t metric_value(const MetricVector& m, std::string_view column) {
  if (column == "synch") return m.synch;
  if (column == "wait") return m.wait;
  if (column == "notify") return m.notify;
  if (column == "atomic") return m.atomic;
  if (column == "park") return m.park;
  if (column == "object") return m.object;
  if (column == "array") return m.array;
  if (column == "method") return m.method;
  if (column == "idynamic") return m.idynamic;
  if (column == "refcycles") return m.refcycles;
  throw Error("unknown metric '" + std::string(column) + "'");
}

std::int64_t cost_model(const Instruction& instr) {
  switch (instr.op) {
    case Opcode::New:
    case Opcode::NewArray:
      return 4;
    case Opcode::Cas:
    case Opcode::MonitorEnter:
    case Opcode::MonitorExit:
    case Opcode::Wait:
    case Opcode::Notify:
    case Opcode::NotifyAll:
    case Opcode::Park:
    case Opcode::Unpark:
      return 8;
    case Opcode::Call:
    case Opcode::CallVirtual:
    case Opcode::CallHandle:
      return 2;
    case Opcode::VectorBinary:
      return std::max<std::int64_t>(instr.width, 1);
    default:
      return 1;
  }
}

SchedulePolicy SchedulePolicy::round_robin(int k) {
  SchedulePolicy p;
  p.kind = Kind::RoundRobin;
  p.quantum = std::max(k, 1);
  return p;
}

SchedulePolicy SchedulePolicy::explicit_order(std::vector<int> threads) {
  SchedulePolicy p;
  p.kind = Kind::Explicit;
  p.choices = std::move(threads);
  return p;
}

SchedulePolicy SchedulePolicy::random(std::uint64_t seed) {
  SchedulePolicy p;
  p.kind = Kind::Random;
  p.seed = seed;
  return p;
}

namespace {

std::int64_t parse_int(std::string_view s, std::string_view what) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error("invalid " + std::string(what) + " '" + std::string(s) + "'");
  }
  return v;
}

} // namespace

SchedulePolicy SchedulePolicy::parse(std::string_view text) {
  auto colon = text.find(':');
  std::string_view kind = text.substr(0, colon);
  std::string_view rest = colon == std::string_view::npos ? std::string_view{} : text.substr(colon + 1);
  if (kind == "rr") return round_robin(rest.empty() ? 1 : static_cast<int>(parse_int(rest, "quantum")));
  if (kind == "random") return random(static_cast<std::uint64_t>(parse_int(rest, "seed")));
  if (kind == "explicit") {
    std::vector<int> ids;
    while (!rest.empty()) {
      auto comma = rest.find(',');
      ids.push_back(static_cast<int>(parse_int(rest.substr(0, comma), "thread id")));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    return explicit_order(std::move(ids));
  }
  throw Error("unknown schedule '" + std::string(text) + "' (expected rr:K, explicit:T1,T2,... or random:SEED)");
}

// ---------------------------------------------------------------------------
// Lowering

namespace {

class Compiler {
 public:
  explicit Compiler(const Program& p) : p_(p) {}

  std::shared_ptr<const CompiledProgram> run() {
    auto out = std::make_shared<CompiledProgram>();
    for (std::size_t i = 0; i < p_.classes.size(); ++i) class_ids_.emplace(p_.classes[i].name, static_cast<std::int32_t>(i));
    for (std::size_t i = 0; i < p_.functions.size(); ++i) {
      func_ids_.emplace(p_.functions[i].name, static_cast<std::int32_t>(i));
    }
    for (std::size_t i = 0; i < p_.globals.size(); ++i) global_ids_.emplace(p_.globals[i].name, static_cast<std::int32_t>(i));

    out->classes.resize(p_.classes.size());
    for (std::size_t i = 0; i < p_.classes.size(); ++i) {
      CClass& cc = out->classes[i];
      cc.name = p_.classes[i].name;
      cc.subclass_of.assign(p_.classes.size(), false);
      std::vector<std::int32_t> chain;
      std::int32_t cur = static_cast<std::int32_t>(i);
      while (cur >= 0 && std::find(chain.begin(), chain.end(), cur) == chain.end()) {
        chain.push_back(cur);
        const auto& sup = p_.classes[static_cast<std::size_t>(cur)].superclass;
        cur = sup ? class_id(*sup) : -1;
      }
      for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
        const ClassDef& c = p_.classes[static_cast<std::size_t>(*it)];
        cc.layout.insert(cc.layout.end(), c.fields.begin(), c.fields.end());
        cc.subclass_of[static_cast<std::size_t>(*it)] = true;
        for (const auto& m : c.methods) cc.methods[m] = function_id(method_function_name(c.name, m));
      }
    }
    layouts_ = &out->classes;

    for (const auto& f : p_.functions) out->functions.push_back(lower(f));

    out->globals = p_.globals;
    for (const auto& g : p_.globals) out->global_cls.push_back(g.class_name ? class_id(*g.class_name) : -1);
    if (p_.threads.empty()) throw Error("program declares no threads");
    for (const auto& t : p_.threads) {
      std::vector<COperand> args;
      for (const auto& a : t.args) args.push_back(constant_operand(a));
      std::int32_t fid = function_id(t.function);
      if (out->functions[static_cast<std::size_t>(fid)].nparams != static_cast<std::int32_t>(args.size())) {
        throw ResolutionError("thread entry '" + t.function + "' called with wrong number of arguments");
      }
      out->threads.emplace_back(fid, std::move(args));
    }
    return out;
  }

 private:
  const Program& p_;
  std::unordered_map<std::string, std::int32_t> class_ids_;
  std::unordered_map<std::string, std::int32_t> func_ids_;
  std::unordered_map<std::string, std::int32_t> global_ids_;
  const std::vector<CClass>* layouts_ = nullptr;
  std::unordered_map<std::string, std::int32_t> locals_;
  std::string where_;

  std::int32_t class_id(const std::string& n) const {
    auto it = class_ids_.find(n);
    if (it == class_ids_.end()) throw ResolutionError(where_ + "unknown class '" + n + "'");
    return it->second;
  }
  std::int32_t function_id(const std::string& n) const {
    auto it = func_ids_.find(n);
    if (it == func_ids_.end()) throw ResolutionError(where_ + "unknown function '" + n + "'");
    return it->second;
  }

  COperand constant_operand(const Operand& op) const {
    COperand c;
    switch (op.kind) {
      case Operand::Kind::Int:
        c.imm = Value::integer(op.imm);
        break;
      case Operand::Kind::Bool:
        c.imm = Value::boolean(op.imm != 0);
        break;
      case Operand::Kind::Null:
        break;
      case Operand::Kind::Global: {
        auto it = global_ids_.find(op.name);
        if (it == global_ids_.end()) throw ResolutionError(where_ + "unknown global '@" + op.name + "'");
        c.kind = COperand::Kind::Global;
        c.index = it->second;
        break;
      }
      case Operand::Kind::Value:
        throw Error(where_ + "value '" + op.name + "' used where a constant is required");
    }
    return c;
  }

  COperand operand(const Operand& op) const {
    if (!op.is_value()) return constant_operand(op);
    auto it = locals_.find(op.name);
    if (it == locals_.end()) throw ResolutionError(where_ + "undefined value '" + op.name + "'");
    COperand c;
    c.kind = COperand::Kind::Local;
    c.index = it->second;
    return c;
  }

  std::int32_t local(const std::string& name) {
    auto [it, fresh] = locals_.emplace(name, static_cast<std::int32_t>(locals_.size()));
    (void)fresh;
    return it->second;
  }

  CFunction lower(const Function& f) {
    where_ = "function '" + f.name + "': ";
    locals_.clear();
    CFunction cf;
    cf.name = f.name;
    cf.nparams = static_cast<std::int32_t>(f.params.size());
    for (const auto& prm : f.params) local(prm);
    for (const auto& b : f.blocks) {
      for (const auto& prm : b.params) local(prm);
      for (const auto& in : b.instrs) {
        if (in.has_result()) local(in.result);
      }
    }
    std::unordered_map<std::string, std::int32_t> block_pc;
    std::int32_t pc = 0;
    for (const auto& b : f.blocks) {
      block_pc.emplace(b.label, pc);
      pc += static_cast<std::int32_t>(b.instrs.size()) + 1;
    }
    auto edge = [&](const BranchTarget& t) {
      auto it = block_pc.find(t.label);
      if (it == block_pc.end()) throw ResolutionError(where_ + "unknown block '" + t.label + "'");
      const BasicBlock* dest = f.find_block(t.label);
      if (dest->params.size() != t.args.size()) throw Error(where_ + "wrong argument count for block '" + t.label + "'");
      CEdge e;
      e.pc = it->second;
      for (const auto& a : t.args) e.args.push_back(operand(a));
      for (const auto& prm : dest->params) e.params.push_back(locals_.at(prm));
      return e;
    };
    for (const auto& b : f.blocks) {
      for (const auto& in : b.instrs) cf.code.push_back(lower(in));
      if (!b.term) throw Error(where_ + "block '" + b.label + "' has no terminator");
      CItem t;
      const Terminator& term = *b.term;
      switch (term.kind) {
        case Terminator::Kind::Br:
          t.kind = ItemKind::Br;
          t.on_true = edge(term.on_true);
          break;
        case Terminator::Kind::CondBr:
          t.kind = ItemKind::CondBr;
          t.ops.push_back(operand(term.cond));
          t.on_true = edge(term.on_true);
          t.on_false = edge(term.on_false);
          break;
        case Terminator::Kind::Return:
          t.kind = ItemKind::Ret;
          if (term.value) {
            t.has_value = true;
            t.ops.push_back(operand(*term.value));
          }
          break;
      }
      cf.code.push_back(std::move(t));
    }
    cf.nlocals = static_cast<std::int32_t>(locals_.size());
    return cf;
  }

  CItem lower(const Instruction& in) {
    CItem c;
    c.op = in.op;
    c.binop = in.binop;
    c.width = in.width;
    c.cost = cost_model(in);
    if (in.has_result()) c.result = locals_.at(in.result);
    for (const auto& op : in.operands) c.ops.push_back(operand(op));
    switch (in.op) {
      case Opcode::New:
      case Opcode::InstanceOf:
        c.cls = class_id(in.symbol);
        break;
      case Opcode::GetField:
      case Opcode::PutField:
      case Opcode::Cas: {
        c.cls = class_id(in.symbol);
        const auto& layout = (*layouts_)[static_cast<std::size_t>(c.cls)].layout;
        auto it = std::find(layout.begin(), layout.end(), in.field);
        if (it == layout.end()) throw ResolutionError(where_ + "class '" + in.symbol + "' has no field '" + in.field + "'");
        c.slot = static_cast<std::int32_t>(it - layout.begin());
        break;
      }
      case Opcode::Call:
      case Opcode::HandleConst:
        c.func = function_id(in.symbol);
        break;
      case Opcode::CallVirtual:
      case Opcode::Guard:
        c.symbol = in.symbol;
        break;
      default:
        break;
    }
    return c;
  }
};

} // namespace

std::shared_ptr<const CompiledProgram> compile(const Program& program) { return Compiler(program).run(); }

// ---------------------------------------------------------------------------
// Machine

Machine::Machine(std::shared_ptr<const CompiledProgram> program, bool record_events)
    : prog_(std::move(program)), record_events_(record_events) {
  for (std::size_t g = 0; g < prog_->globals.size(); ++g) {
    std::int32_t cls = prog_->global_cls[g];
    if (cls >= 0) {
      allocate(cls, prog_->classes[static_cast<std::size_t>(cls)].layout.size());
    } else {
      allocate(-1, static_cast<std::size_t>(prog_->globals[g].array_length));
    }
  }
  for (const auto& [fid, args] : prog_->threads) {
    Thread t;
    Frame f;
    f.func = fid;
    f.locals.resize(static_cast<std::size_t>(prog_->functions[static_cast<std::size_t>(fid)].nlocals));
    for (std::size_t i = 0; i < args.size(); ++i) f.locals[i] = read(f, args[i]);
    t.frames.push_back(std::move(f));
    threads_.push_back(std::move(t));
  }
}

std::int32_t Machine::allocate(std::int32_t cls, std::size_t slots) {
  HeapObject o;
  o.cls = cls;
  o.slots.assign(slots, Value::integer(0));
  heap_.push_back(std::move(o));
  return static_cast<std::int32_t>(heap_.size() - 1);
}

Value Machine::read(const Frame& f, const COperand& op) const {
  switch (op.kind) {
    case COperand::Kind::Local:
      return f.locals[static_cast<std::size_t>(op.index)];
    case COperand::Kind::Imm:
      return op.imm;
    case COperand::Kind::Global:
      return Value::ref(op.index);
  }
  return {};
}

void Machine::fault(std::string message) {
  if (ended_) return;
  ended_ = true;
  trace_.status = TraceStatus::Fault;
  trace_.reason = std::move(message);
}

bool Machine::monitor_available(int tid, const Value& obj) const {
  if (obj.kind != Value::Kind::Ref) return true; // executing faults
  const HeapObject& o = heap_[static_cast<std::size_t>(obj.v)];
  return o.owner == 0 || o.owner == tid;
}

bool Machine::is_enabled(int tid) const {
  if (ended_) return false;
  const Thread& t = threads_[static_cast<std::size_t>(tid - 1)];
  switch (t.state) {
    case ThreadState::Done:
    case ThreadState::Waiting:
      return false;
    case ThreadState::Notified:
      return heap_[static_cast<std::size_t>(t.wait_obj)].owner == 0;
    case ThreadState::Running:
      break;
  }
  const Frame& f = t.frames.back();
  const CItem& it = prog_->functions[static_cast<std::size_t>(f.func)].code[static_cast<std::size_t>(f.pc)];
  if (it.kind != ItemKind::Instr) return true;
  if (it.op == Opcode::MonitorEnter) return monitor_available(tid, read(f, it.ops[0]));
  if (it.op == Opcode::Park) return t.permit;
  return true;
}

std::vector<int> Machine::enabled() const {
  std::vector<int> out;
  for (int tid = 1; tid <= thread_count(); ++tid) {
    if (is_enabled(tid)) out.push_back(tid);
  }
  return out;
}

bool Machine::finished() const {
  if (ended_) return true;
  for (int tid = 1; tid <= thread_count(); ++tid) {
    if (is_enabled(tid)) return false;
  }
  return true;
}

void Machine::exhaust_budget() {
  if (ended_) return;
  ended_ = true;
  trace_.status = TraceStatus::BudgetExhausted;
}

ResultTrace Machine::result() const {
  if (ended_) return trace_;
  ResultTrace out = trace_;
  bool all_done = std::all_of(threads_.begin(), threads_.end(), [](const Thread& t) { return t.state == ThreadState::Done; });
  out.status = all_done ? TraceStatus::Terminated : TraceStatus::Deadlock;
  return out;
}

void Machine::step(int tid) {
  ++steps_;
  Thread& t = threads_[static_cast<std::size_t>(tid - 1)];
  if (t.state == ThreadState::Notified) {
    HeapObject& o = heap_[static_cast<std::size_t>(t.wait_obj)];
    o.owner = tid;
    o.count = t.saved_count;
    t.state = ThreadState::Running;
    t.wait_obj = -1;
    t.saved_count = 0;
    return;
  }
  execute(tid);
}

void Machine::branch(Frame& f, const CEdge& e) {
  if (e.params.size() == 1) {
    f.locals[static_cast<std::size_t>(e.params[0])] = read(f, e.args[0]);
  } else if (!e.params.empty()) {
    std::vector<Value> vals;
    vals.reserve(e.args.size());
    for (const auto& a : e.args) vals.push_back(read(f, a));
    for (std::size_t i = 0; i < vals.size(); ++i) f.locals[static_cast<std::size_t>(e.params[i])] = vals[i];
  }
  f.pc = e.pc;
}

void Machine::do_return(int tid, Value v) {
  Thread& t = threads_[static_cast<std::size_t>(tid - 1)];
  std::int32_t slot = t.frames.back().ret_slot;
  t.frames.pop_back();
  if (t.frames.empty()) {
    t.state = ThreadState::Done;
    return;
  }
  Frame& caller = t.frames.back();
  if (slot >= 0) caller.locals[static_cast<std::size_t>(slot)] = v;
  ++caller.pc;
}

namespace {

bool values_equal(const Value& a, const Value& b) { return a == b; }

} // namespace

void Machine::execute(int tid) {
  Thread& t = threads_[static_cast<std::size_t>(tid - 1)];
  Frame& f = t.frames.back();
  const CFunction& fn = prog_->functions[static_cast<std::size_t>(f.func)];
  const CItem& it = fn.code[static_cast<std::size_t>(f.pc)];
  metrics_.refcycles += it.cost;

  switch (it.kind) {
    case ItemKind::Br:
      branch(f, it.on_true);
      return;
    case ItemKind::CondBr: {
      Value c = read(f, it.ops[0]);
      if (c.kind != Value::Kind::Bool) return fault("branch condition is not a boolean in '" + fn.name + "'");
      branch(f, c.v ? it.on_true : it.on_false);
      return;
    }
    case ItemKind::Ret:
      do_return(tid, it.has_value ? read(f, it.ops[0]) : Value{});
      return;
    case ItemKind::Instr:
      break;
  }

  ++histogram_[static_cast<std::size_t>(it.op)];
  if (record_events_) events_.push_back({steps_, tid, f.func, it.op});

  auto arg = [&](std::size_t i) { return read(f, it.ops[i]); };
  auto set = [&](Value v) {
    if (it.result >= 0) f.locals[static_cast<std::size_t>(it.result)] = v;
  };
  auto object = [&](const Value& v, const char* what) -> HeapObject* {
    if (v.kind == Value::Kind::Null) {
      fault(std::string("null dereference in ") + what + " in '" + fn.name + "'");
      return nullptr;
    }
    if (v.kind != Value::Kind::Ref) {
      fault(std::string(what) + " on a non-reference in '" + fn.name + "'");
      return nullptr;
    }
    return &heap_[static_cast<std::size_t>(v.v)];
  };
  auto field_object = [&](const Value& v, const char* what) -> HeapObject* {
    HeapObject* o = object(v, what);
    if (!o) return nullptr;
    if (o->cls < 0 || !prog_->classes[static_cast<std::size_t>(o->cls)].subclass_of[static_cast<std::size_t>(it.cls)]) {
      fault(std::string(what) + " on an object of the wrong class in '" + fn.name + "'");
      return nullptr;
    }
    return o;
  };
  auto array = [&](const Value& v, const Value& idx, std::int64_t span, const char* what) -> HeapObject* {
    HeapObject* o = object(v, what);
    if (!o) return nullptr;
    if (o->cls >= 0) {
      fault(std::string(what) + " on a non-array in '" + fn.name + "'");
      return nullptr;
    }
    if (idx.kind != Value::Kind::Int) {
      fault(std::string(what) + " with a non-integer index in '" + fn.name + "'");
      return nullptr;
    }
    if (idx.v < 0 || idx.v + span > static_cast<std::int64_t>(o->slots.size())) {
      fault(std::string(what) + " index " + std::to_string(idx.v) + " out of bounds in '" + fn.name + "'");
      return nullptr;
    }
    return o;
  };
  auto owned = [&](HeapObject* o, const char* what) {
    if (o->owner != tid) {
      fault(std::string("IllegalMonitorState: ") + what + " without owning the monitor in '" + fn.name + "'");
      return false;
    }
    return true;
  };
  auto binary = [&](BinaryOp op, const Value& a, const Value& b, Value& out) -> bool {
    if (op == BinaryOp::CmpEq || op == BinaryOp::CmpNe) {
      bool eq = values_equal(a, b);
      out = Value::boolean(op == BinaryOp::CmpEq ? eq : !eq);
      return true;
    }
    if ((op == BinaryOp::And || op == BinaryOp::Or) && a.kind == Value::Kind::Bool && b.kind == Value::Kind::Bool) {
      out = Value::boolean(op == BinaryOp::And ? (a.v && b.v) : (a.v || b.v));
      return true;
    }
    if (a.kind != Value::Kind::Int || b.kind != Value::Kind::Int) {
      fault(std::string(binary_op_name(op)) + " on non-integer operands in '" + fn.name + "'");
      return false;
    }
    // Wrapping arithmetic, as on the JVM.
    auto ua = static_cast<std::uint64_t>(a.v);
    auto ub = static_cast<std::uint64_t>(b.v);
    switch (op) {
      case BinaryOp::Add:
        out = Value::integer(static_cast<std::int64_t>(ua + ub));
        return true;
      case BinaryOp::Sub:
        out = Value::integer(static_cast<std::int64_t>(ua - ub));
        return true;
      case BinaryOp::Mul:
        out = Value::integer(static_cast<std::int64_t>(ua * ub));
        return true;
      case BinaryOp::Div:
      case BinaryOp::Mod:
        if (b.v == 0) {
          fault("division by zero in '" + fn.name + "'");
          return false;
        }
        if (a.v == INT64_MIN && b.v == -1) {
          out = Value::integer(op == BinaryOp::Div ? a.v : 0);
          return true;
        }
        out = Value::integer(op == BinaryOp::Div ? a.v / b.v : a.v % b.v);
        return true;
      case BinaryOp::And:
        out = Value::integer(a.v & b.v);
        return true;
      case BinaryOp::Or:
        out = Value::integer(a.v | b.v);
        return true;
      case BinaryOp::CmpLt:
        out = Value::boolean(a.v < b.v);
        return true;
      case BinaryOp::CmpLe:
        out = Value::boolean(a.v <= b.v);
        return true;
      default:
        return false;
    }
  };
  auto invoke = [&](std::int32_t func, std::size_t first_arg) {
    const CFunction& callee = prog_->functions[static_cast<std::size_t>(func)];
    std::size_t nargs = it.ops.size() - first_arg;
    if (static_cast<std::int32_t>(nargs) != callee.nparams) {
      return fault("call to '" + callee.name + "' with " + std::to_string(nargs) + " arguments");
    }
    Frame nf;
    nf.func = func;
    nf.ret_slot = it.result;
    nf.locals.resize(static_cast<std::size_t>(callee.nlocals));
    for (std::size_t i = 0; i < nargs; ++i) nf.locals[i] = arg(first_arg + i);
    t.frames.push_back(std::move(nf)); // invalidates f
  };

  switch (it.op) {
    case Opcode::Const:
    case Opcode::Mov:
      set(arg(0));
      break;
    case Opcode::Binary: {
      Value out;
      if (!binary(it.binop, arg(0), arg(1), out)) return;
      set(out);
      break;
    }
    case Opcode::Select: {
      Value c = arg(0);
      if (c.kind != Value::Kind::Bool) return fault("select condition is not a boolean in '" + fn.name + "'");
      set(c.v ? arg(1) : arg(2));
      break;
    }
    case Opcode::New:
      ++metrics_.object;
      set(Value::ref(allocate(it.cls, prog_->classes[static_cast<std::size_t>(it.cls)].layout.size())));
      break;
    case Opcode::NewArray: {
      Value n = arg(0);
      if (n.kind != Value::Kind::Int || n.v < 0) return fault("invalid array length in '" + fn.name + "'");
      ++metrics_.array;
      set(Value::ref(allocate(-1, static_cast<std::size_t>(n.v))));
      break;
    }
    case Opcode::ArrayLength: {
      HeapObject* o = object(arg(0), "alen");
      if (!o) return;
      if (o->cls >= 0) return fault("alen on a non-array in '" + fn.name + "'");
      set(Value::integer(static_cast<std::int64_t>(o->slots.size())));
      break;
    }
    case Opcode::GetField: {
      HeapObject* o = field_object(arg(0), "getfield");
      if (!o) return;
      set(o->slots[static_cast<std::size_t>(it.slot)]);
      break;
    }
    case Opcode::PutField: {
      HeapObject* o = field_object(arg(0), "putfield");
      if (!o) return;
      o->slots[static_cast<std::size_t>(it.slot)] = arg(1);
      break;
    }
    case Opcode::Cas: {
      HeapObject* o = field_object(arg(0), "cas");
      if (!o) return;
      ++metrics_.atomic;
      Value& cell = o->slots[static_cast<std::size_t>(it.slot)];
      bool ok = values_equal(cell, arg(1));
      if (ok) cell = arg(2);
      set(Value::boolean(ok));
      break;
    }
    case Opcode::ArrayLoad: {
      Value idx = arg(1);
      HeapObject* o = array(arg(0), idx, 1, "aload");
      if (!o) return;
      set(o->slots[static_cast<std::size_t>(idx.v)]);
      break;
    }
    case Opcode::ArrayStore: {
      Value idx = arg(1);
      HeapObject* o = array(arg(0), idx, 1, "astore");
      if (!o) return;
      o->slots[static_cast<std::size_t>(idx.v)] = arg(2);
      break;
    }
    case Opcode::VectorBinary: {
      Value off = arg(3);
      HeapObject* dst = array(arg(0), off, it.width, "vbinop");
      if (!dst) return;
      HeapObject* a = array(arg(1), off, it.width, "vbinop");
      if (!a) return;
      HeapObject* b = array(arg(2), off, it.width, "vbinop");
      if (!b) return;
      std::vector<Value> lanes(static_cast<std::size_t>(it.width));
      for (std::int64_t k = 0; k < it.width; ++k) {
        auto i = static_cast<std::size_t>(off.v + k);
        if (!binary(it.binop, a->slots[i], b->slots[i], lanes[static_cast<std::size_t>(k)])) return;
      }
      for (std::int64_t k = 0; k < it.width; ++k) {
        dst->slots[static_cast<std::size_t>(off.v + k)] = lanes[static_cast<std::size_t>(k)];
      }
      break;
    }
    case Opcode::MonitorEnter: {
      HeapObject* o = object(arg(0), "monitorenter");
      if (!o) return;
      ++metrics_.synch;
      o->owner = tid;
      ++o->count;
      break;
    }
    case Opcode::MonitorExit: {
      HeapObject* o = object(arg(0), "monitorexit");
      if (!o || !owned(o, "monitorexit")) return;
      if (--o->count == 0) o->owner = 0;
      break;
    }
    case Opcode::Wait: {
      Value ov = arg(0);
      HeapObject* o = object(ov, "wait");
      if (!o || !owned(o, "wait")) return;
      ++metrics_.wait;
      t.state = ThreadState::Waiting;
      t.wait_obj = static_cast<std::int32_t>(ov.v);
      t.saved_count = o->count;
      o->owner = 0;
      o->count = 0;
      break;
    }
    case Opcode::Notify:
    case Opcode::NotifyAll: {
      Value ov = arg(0);
      HeapObject* o = object(ov, "notify");
      if (!o || !owned(o, "notify")) return;
      ++metrics_.notify;
      for (auto& w : threads_) {
        if (w.state == ThreadState::Waiting && w.wait_obj == static_cast<std::int32_t>(ov.v)) {
          w.state = ThreadState::Notified;
          if (it.op == Opcode::Notify) break; // smallest thread id first
        }
      }
      break;
    }
    case Opcode::Park:
      ++metrics_.park;
      t.permit = false;
      break;
    case Opcode::Unpark: {
      Value id = arg(0);
      if (id.kind != Value::Kind::Int || id.v < 1 || id.v > thread_count()) {
        return fault("unpark of an invalid thread id in '" + fn.name + "'");
      }
      threads_[static_cast<std::size_t>(id.v - 1)].permit = true;
      break;
    }
    case Opcode::Guard: {
      Value c = arg(0);
      if (c.kind != Value::Kind::Bool) return fault("guard condition is not a boolean in '" + fn.name + "'");
      if (!c.v) {
        ended_ = true;
        trace_.status = TraceStatus::Deopt;
        trace_.reason = it.symbol;
        return;
      }
      break;
    }
    case Opcode::InstanceOf: {
      Value v = arg(0);
      bool r = false;
      if (v.kind == Value::Kind::Ref) {
        const HeapObject& o = heap_[static_cast<std::size_t>(v.v)];
        r = o.cls >= 0 && prog_->classes[static_cast<std::size_t>(o.cls)].subclass_of[static_cast<std::size_t>(it.cls)];
      }
      set(Value::boolean(r));
      break;
    }
    case Opcode::HandleConst:
      ++metrics_.idynamic;
      set(Value::handle(it.func));
      break;
    case Opcode::Call:
      invoke(it.func, 0);
      return;
    case Opcode::CallVirtual: {
      HeapObject* o = object(arg(0), "callvirtual");
      if (!o) return;
      if (o->cls < 0) return fault("callvirtual on an array in '" + fn.name + "'");
      const auto& methods = prog_->classes[static_cast<std::size_t>(o->cls)].methods;
      auto m = methods.find(it.symbol);
      if (m == methods.end()) return fault("no method '" + it.symbol + "' on receiver in '" + fn.name + "'");
      ++metrics_.method;
      invoke(m->second, 0);
      return;
    }
    case Opcode::CallHandle: {
      Value h = arg(0);
      if (h.kind != Value::Kind::Handle) return fault("callhandle on a non-handle in '" + fn.name + "'");
      ++metrics_.method;
      invoke(static_cast<std::int32_t>(h.v), 1);
      return;
    }
    case Opcode::Output: {
      Value v = arg(0);
      if (v.kind == Value::Kind::Int || v.kind == Value::Kind::Bool) {
        trace_.events.push_back(v.v);
      } else {
        return fault("output of a non-integer value in '" + fn.name + "'");
      }
      break;
    }
  }
  ++t.frames.back().pc;
}

namespace {

template <typename T>
void put(std::string& out, T v) {
  out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_value(std::string& out, const Value& v) {
  out.push_back(static_cast<char>(v.kind));
  put(out, v.v);
}

} // namespace

void Machine::serialize(std::string& out) const {
  put(out, steps_);
  put(out, static_cast<std::uint32_t>(trace_.events.size()));
  for (auto e : trace_.events) put(out, e);
  for (const auto& t : threads_) {
    out.push_back(static_cast<char>(t.state));
    out.push_back(static_cast<char>(t.permit));
    put(out, t.wait_obj);
    put(out, t.saved_count);
    put(out, static_cast<std::uint32_t>(t.frames.size()));
    for (const auto& f : t.frames) {
      put(out, f.func);
      put(out, f.pc);
      put(out, f.ret_slot);
      for (const auto& v : f.locals) put_value(out, v);
    }
  }
  put(out, static_cast<std::uint32_t>(heap_.size()));
  for (const auto& o : heap_) {
    put(out, o.cls);
    put(out, o.owner);
    put(out, o.count);
    put(out, static_cast<std::uint32_t>(o.slots.size()));
    for (const auto& v : o.slots) put_value(out, v);
  }
}

// ---------------------------------------------------------------------------
// Driver

std::int64_t RunResult::count_in(std::string_view fn, Opcode op) const {
  std::int64_t n = 0;
  for (const auto& e : events) {
    if (e.op == op && function_names[static_cast<std::size_t>(e.function)] == fn) ++n;
  }
  return n;
}

RunResult run(const Program& program, const RunOptions& options) { return run(compile(program), options); }

RunResult run(std::shared_ptr<const CompiledProgram> program, const RunOptions& options) {
  Machine m(program, options.record_events);
  const SchedulePolicy& pol = options.policy;
  std::mt19937_64 rng(pol.seed);
  std::size_t next_choice = 0;
  int current = 1;
  int used = 0;

  while (!m.finished()) {
    if (m.steps() >= options.budget) {
      m.exhaust_budget();
      break;
    }
    int tid = 0;
    switch (pol.kind) {
      case SchedulePolicy::Kind::Explicit:
        // Entries naming a disabled thread are skipped; past the end, the
        // lowest enabled thread runs.
        while (next_choice < pol.choices.size() && tid == 0) {
          int c = pol.choices[next_choice++];
          if (c >= 1 && c <= m.thread_count() && m.is_enabled(c)) tid = c;
        }
        if (tid == 0) tid = m.enabled().front();
        break;
      case SchedulePolicy::Kind::Random: {
        auto en = m.enabled();
        tid = en[std::uniform_int_distribution<std::size_t>(0, en.size() - 1)(rng)];
        break;
      }
      case SchedulePolicy::Kind::RoundRobin:
        if (used >= pol.quantum || !m.is_enabled(current)) {
          int n = m.thread_count();
          int start = used >= pol.quantum ? current : current - 1;
          for (int k = 1; k <= n; ++k) {
            int cand = (start + k - 1) % n + 1;
            if (m.is_enabled(cand)) {
              if (cand != current) used = 0;
              current = cand;
              break;
            }
          }
          if (used >= pol.quantum) used = 0;
        }
        tid = current;
        ++used;
        break;
    }
    m.step(tid);
  }

  RunResult r;
  r.trace = m.result();
  r.metrics = m.metrics();
  r.histogram = m.histogram();
  r.steps = m.steps();
  r.events = m.events();
  if (options.record_events) {
    for (const auto& fn : program->functions) r.function_names.push_back(fn.name);
  }
  return r;
}

} // namespace cirlab
