#pragma once

// Small-step interpreter for guest programs.
//
// A Machine holds the complete state of one execution. Each step runs one
// instruction (or one monitor reacquisition after a notify) of one enabled
// thread. `run` drives a Machine with a schedule policy; the scheduler module
// drives it with every possible choice.

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "cirlab/ir.hpp"

namespace cirlab {

struct Value {
  enum class Kind : std::uint8_t { Null, Int, Bool, Ref, Handle };
  Kind kind = Kind::Null;
  std::int64_t v = 0; // Int/Bool payload, heap index, or function index

  static Value integer(std::int64_t x) { return {Kind::Int, x}; }
  static Value boolean(bool b) { return {Kind::Bool, b ? 1 : 0}; }
  static Value ref(std::int64_t h) { return {Kind::Ref, h}; }
  static Value handle(std::int64_t f) { return {Kind::Handle, f}; }

  friend bool operator==(const Value&, const Value&) = default;
};

enum class TraceStatus : std::uint8_t { Terminated, Deopt, BudgetExhausted, Deadlock, Fault };

std::string_view trace_status_name(TraceStatus s);

/// The externally visible result of one execution.
struct ResultTrace {
  std::vector<std::int64_t> events;
  TraceStatus status = TraceStatus::Terminated;
  std::string reason; // guard tag for Deopt, message for Fault

  friend bool operator==(const ResultTrace&, const ResultTrace&) = default;
  friend auto operator<=>(const ResultTrace&, const ResultTrace&) = default;
};

/// "[1, 2] terminated", "[] deopt(bounds)".
std::string format_trace(const ResultTrace& trace);

struct MetricVector {
  std::int64_t synch = 0;
  std::int64_t wait = 0;
  std::int64_t notify = 0;
  std::int64_t atomic = 0;
  std::int64_t park = 0;
  std::int64_t object = 0;
  std::int64_t array = 0;
  std::int64_t method = 0;
  std::int64_t idynamic = 0;
  std::int64_t refcycles = 0;
  // Ingest-only; the interpreter never fills these.
  std::optional<double> cpu;
  std::optional<double> cachemiss;

  friend bool operator==(const MetricVector&, const MetricVector&) = default;
};

/// Interpreter-produced metric columns, in profile CSV order.
inline constexpr std::array<std::string_view, 10> kProfileColumns = {
    "synch", "wait", "notify", "atomic", "park", "object", "array", "method", "idynamic", "refcycles",
};

std::int64_t metric_value(const MetricVector& m, std::string_view column);

/// Reference-cycle cost of one instruction.
std::int64_t cost_model(const Instruction& instr);

struct SchedulePolicy {
  enum class Kind : std::uint8_t { RoundRobin, Explicit, Random };
  Kind kind = Kind::RoundRobin;
  int quantum = 1;          // RoundRobin: steps per turn
  std::vector<int> choices; // Explicit: 1-based thread ids
  std::uint64_t seed = 0;   // Random

  static SchedulePolicy round_robin(int k = 1);
  static SchedulePolicy explicit_order(std::vector<int> threads);
  static SchedulePolicy random(std::uint64_t seed);
  /// "rr:K", "explicit:1,2,1", or "random:SEED".
  static SchedulePolicy parse(std::string_view text);
};

struct RunOptions {
  SchedulePolicy policy;
  std::int64_t budget = 1'000'000; // max steps across all threads
  bool record_events = false;
};

struct ExecEvent {
  std::int64_t step = 0;
  int thread = 0;
  std::int32_t function = 0; // index into RunResult::function_names
  Opcode op = Opcode::Const;

  friend bool operator==(const ExecEvent&, const ExecEvent&) = default;
};

struct RunResult {
  ResultTrace trace;
  MetricVector metrics;
  std::array<std::int64_t, kOpcodeCount> histogram{}; // dynamic count per opcode
  std::int64_t steps = 0;
  std::vector<ExecEvent> events; // filled when RunOptions::record_events
  std::vector<std::string> function_names;

  std::int64_t count(Opcode op) const { return histogram[static_cast<std::size_t>(op)]; }
  /// Executions of `op` inside function `fn`; needs recorded events.
  std::int64_t count_in(std::string_view fn, Opcode op) const;
};

struct CompiledProgram;
struct COperand;
struct CEdge;

/// Lowers a program to the interpreter's flat form. Throws ResolutionError
/// for names that do not resolve.
std::shared_ptr<const CompiledProgram> compile(const Program& program);

class Machine {
 public:
  explicit Machine(std::shared_ptr<const CompiledProgram> program, bool record_events = false);

  int thread_count() const { return static_cast<int>(threads_.size()); }
  /// Thread ids (1-based) that can take a step now, ascending.
  std::vector<int> enabled() const;
  bool is_enabled(int tid) const;
  /// Executes one step of thread `tid`, which must be enabled.
  void step(int tid);

  /// True once the run has ended: every thread returned, a guard failed, a
  /// fault occurred, or no thread can make progress.
  bool finished() const;
  /// Marks the run as cut off by the step budget.
  void exhaust_budget();

  const ResultTrace& trace() const { return trace_; }
  /// Final trace status; valid once finished().
  ResultTrace result() const;
  const MetricVector& metrics() const { return metrics_; }
  const std::array<std::int64_t, kOpcodeCount>& histogram() const { return histogram_; }
  std::int64_t steps() const { return steps_; }
  const std::vector<ExecEvent>& events() const { return events_; }

  /// Byte encoding of everything that determines future behaviour and the
  /// trace so far: frames, heap, monitors, permits, emitted events, step count.
  void serialize(std::string& out) const;

 private:
  struct Frame {
    std::int32_t func = 0;
    std::int32_t pc = 0;
    std::int32_t ret_slot = -1;
    std::vector<Value> locals;
  };
  enum class ThreadState : std::uint8_t { Running, Waiting, Notified, Done };
  struct Thread {
    std::vector<Frame> frames;
    ThreadState state = ThreadState::Running;
    std::int32_t wait_obj = -1;
    std::int32_t saved_count = 0;
    bool permit = false;
  };
  struct HeapObject {
    std::int32_t cls = -1; // -1 for arrays
    std::int32_t owner = 0;
    std::int32_t count = 0;
    std::vector<Value> slots;
  };

  std::shared_ptr<const CompiledProgram> prog_;
  std::vector<Thread> threads_;
  std::vector<HeapObject> heap_;
  ResultTrace trace_;
  bool ended_ = false;
  MetricVector metrics_;
  std::array<std::int64_t, kOpcodeCount> histogram_{};
  std::int64_t steps_ = 0;
  bool record_events_ = false;
  std::vector<ExecEvent> events_;

  void fault(std::string message);
  Value read(const Frame& f, const COperand& op) const;
  std::int32_t allocate(std::int32_t cls, std::size_t slots);
  bool monitor_available(int tid, const Value& obj) const;
  void execute(int tid);
  void do_return(int tid, Value v);
  void branch(Frame& f, const CEdge& e);
};

RunResult run(const Program& program, const RunOptions& options = {});
RunResult run(std::shared_ptr<const CompiledProgram> program, const RunOptions& options = {});

} // namespace cirlab
