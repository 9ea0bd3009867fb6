#include <gtest/gtest.h>

#include "cirlab/error.hpp"
#include "cirlab/interpreter.hpp"
#include "cirlab/text.hpp"

using namespace cirlab;

namespace {

RunResult run_text(const std::string& text, RunOptions opts = {}) { return run(parse_program(text), opts); }

std::vector<std::int64_t> ev(std::initializer_list<std::int64_t> xs) { return xs; }

} // namespace

TEST(Interpreter, SequentialOutputs) {
  auto r = run_text("fn main() { b0: output 1\n output 2\n return }\nthread main()");
  EXPECT_EQ(r.trace.events, ev({1, 2}));
  EXPECT_EQ(r.trace.status, TraceStatus::Terminated);
}

TEST(Interpreter, ExplicitScheduleOrdersThreads) {
  const char* text = "fn t(id) { b0: output id\n return }\nthread t(1)\nthread t(2)";
  RunOptions o;
  o.policy = SchedulePolicy::explicit_order({1, 2});
  EXPECT_EQ(run_text(text, o).trace.events, ev({1, 2}));
  o.policy = SchedulePolicy::explicit_order({2, 1});
  EXPECT_EQ(run_text(text, o).trace.events, ev({2, 1}));
}

TEST(Interpreter, UncontendedCas) {
  auto r = run_text(R"(
class C { fields f; }
fn main() {
b0:
  o = new C
  putfield o, C.f, 5
  ok = cas o, C.f, 5, 9
  v = getfield o, C.f
  output ok
  output v
  return
}
thread main()
)");
  EXPECT_EQ(r.trace.events, ev({1, 9}));
  EXPECT_EQ(r.metrics.atomic, 1);
  EXPECT_EQ(r.metrics.object, 1);
}

TEST(Interpreter, CostModelTable) {
  Instruction add;
  add.op = Opcode::Binary;
  EXPECT_EQ(cost_model(add), 1);
  Instruction cas;
  cas.op = Opcode::Cas;
  EXPECT_EQ(cost_model(cas), 8);
  Instruction nw;
  nw.op = Opcode::New;
  EXPECT_EQ(cost_model(nw), 4);
  Instruction call;
  call.op = Opcode::CallHandle;
  EXPECT_EQ(cost_model(call), 2);
  Instruction vb;
  vb.op = Opcode::VectorBinary;
  vb.width = 4;
  EXPECT_EQ(cost_model(vb), 4);
  for (Opcode op : {Opcode::MonitorEnter, Opcode::MonitorExit, Opcode::Wait, Opcode::Notify, Opcode::NotifyAll,
                    Opcode::Park, Opcode::Unpark}) {
    Instruction i;
    i.op = op;
    EXPECT_EQ(cost_model(i), 8);
  }
}

TEST(Interpreter, VectorOpCheaperThanScalarLoop) {
  // Scalar loop over 4 elements vs one vbinop: count the cost units of each.
  const char* scalar = R"(
fn main() {
b0:
  a = newarray 4
  c = newarray 4
  br h(0)
h(i):
  t = cmplt i, 4
  cbr t, body, exit
body:
  x = aload a, i
  y = aload a, i
  s = add x, y
  astore c, i, s
  i2 = add i, 1
  br h(i2)
exit:
  return
}
thread main()
)";
  const char* vector = R"(
fn main() {
b0:
  a = newarray 4
  c = newarray 4
  vbinop add, c, a, a, 0, 4
  return
}
thread main()
)";
  auto rs = run_text(scalar);
  auto rv = run_text(vector);
  std::int64_t alloc = 8;
  // Scalar: 4 iterations of (cmplt, cbr, 5 body ops, br) plus the final test, entry br, return.
  EXPECT_EQ(rs.metrics.refcycles - alloc, 4 * 8 + 2 + 1 + 1);
  EXPECT_EQ(rv.metrics.refcycles - alloc, 4 + 1);
  EXPECT_LT(rv.metrics.refcycles, rs.metrics.refcycles);
}

TEST(Interpreter, MetricMappingAndEventLog) {
  auto prog = parse_program(R"(
class C { fields f; methods m; }
fn C.m(this) { b0: return 1 }
fn id(x) { b0: return x }
fn main() {
b0:
  o = new C
  a = newarray 3
  monitorenter o
  notify o
  notifyall o
  monitorexit o
  r = callvirtual o, m()
  h = handleconst id
  s = callhandle h(4)
  unpark 1
  park
  output s
  return
}
thread main()
)");
  RunOptions o;
  o.record_events = true;
  auto r = run(prog, o);
  EXPECT_EQ(r.trace.events, ev({4}));
  EXPECT_EQ(r.metrics.synch, 1);
  EXPECT_EQ(r.metrics.notify, 2);
  EXPECT_EQ(r.metrics.object, 1);
  EXPECT_EQ(r.metrics.array, 1);
  EXPECT_EQ(r.metrics.method, 2);
  EXPECT_EQ(r.metrics.idynamic, 1);
  EXPECT_EQ(r.metrics.park, 1);
  std::int64_t replayed = 0;
  for (const auto& e : r.events) {
    if (e.op == Opcode::CallVirtual || e.op == Opcode::CallHandle) ++replayed;
  }
  EXPECT_EQ(replayed, r.metrics.method);
  std::int64_t instrs = 0;
  for (auto c : r.histogram) instrs += c;
  EXPECT_GE(r.metrics.refcycles, instrs);
}

TEST(Interpreter, GuardFailureDeopts) {
  auto r = run_text("fn main() { b0: output 3\n c = cmplt 2, 1\n guard c, bounds\n output 4\n return }\nthread main()");
  EXPECT_EQ(r.trace.events, ev({3}));
  EXPECT_EQ(r.trace.status, TraceStatus::Deopt);
  EXPECT_EQ(r.trace.reason, "bounds");
}

TEST(Interpreter, BudgetExhaustion) {
  auto r = run_text("fn main() { b0: br l\nl: br l }\nthread main()", RunOptions{{}, 50, false});
  EXPECT_EQ(r.trace.status, TraceStatus::BudgetExhausted);
  EXPECT_EQ(r.steps, 50);
}

TEST(Interpreter, DeadlockWhenEveryThreadParks) {
  auto r = run_text("fn main() { b0: park\n return }\nthread main()");
  EXPECT_EQ(r.trace.status, TraceStatus::Deadlock);
}

TEST(Interpreter, UnparkBeforeParkBanksPermit) {
  auto r = run_text("fn main() { b0: unpark 1\n unpark 1\n park\n output 1\n park\n output 2\n return }\nthread main()");
  EXPECT_EQ(r.trace.events, ev({1}));
  EXPECT_EQ(r.trace.status, TraceStatus::Deadlock);
}

TEST(Interpreter, WaitNotifyHandshake) {
  const char* text = R"(
class Box { fields ready; }
global box = new Box
fn consumer(b) {
b0:
  monitorenter b
  br check
check:
  r = getfield b, Box.ready
  z = cmpeq r, 0
  cbr z, sleep, done
sleep:
  wait b
  br check
done:
  monitorexit b
  output 2
  return
}
fn producer(b) {
b0:
  monitorenter b
  putfield b, Box.ready, 1
  notify b
  monitorexit b
  output 1
  return
}
thread consumer(@box)
thread producer(@box)
)";
  for (int k = 1; k <= 5; ++k) {
    RunOptions o;
    o.policy = SchedulePolicy::round_robin(k);
    auto r = run_text(text, o);
    EXPECT_EQ(r.trace.status, TraceStatus::Terminated) << k;
    EXPECT_EQ(r.trace.events.size(), 2u);
    EXPECT_LE(r.metrics.wait, 1);
  }
}

TEST(Interpreter, NotifyWakesSmallestWaiter) {
  const char* text = R"(
class L { fields n; }
global l = new L
fn waiter(o, id) {
b0:
  monitorenter o
  wait o
  output id
  monitorexit o
  return
}
fn waker(o) {
b0:
  monitorenter o
  notify o
  monitorexit o
  return
}
thread waiter(@l, 1)
thread waiter(@l, 2)
thread waker(@l)
)";
  RunOptions o;
  // Both waiters block first, then the waker runs.
  o.policy = SchedulePolicy::explicit_order({1, 1, 2, 2, 3, 3, 3, 3, 1, 1});
  auto r = run_text(text, o);
  EXPECT_EQ(r.trace.events, ev({1}));
  EXPECT_EQ(r.trace.status, TraceStatus::Deadlock);
}

TEST(Interpreter, Faults) {
  EXPECT_EQ(run_text("fn main() { b0: x = div 1, 0\n return }\nthread main()").trace.status, TraceStatus::Fault);
  EXPECT_EQ(run_text("fn main() { b0: a = newarray 2\n x = aload a, 2\n return }\nthread main()").trace.status,
            TraceStatus::Fault);
  EXPECT_EQ(run_text("fn main() { b0: output null\n return }\nthread main()").trace.status, TraceStatus::Fault);
  auto ims = run_text("class C { }\nfn main() { b0: o = new C\n monitorexit o\n return }\nthread main()");
  EXPECT_EQ(ims.trace.status, TraceStatus::Fault);
  EXPECT_NE(ims.trace.reason.find("IllegalMonitorState"), std::string::npos);
}

TEST(Interpreter, ReentrantMonitor) {
  auto r = run_text(R"(
class C { }
fn main() {
b0:
  o = new C
  monitorenter o
  monitorenter o
  monitorexit o
  monitorexit o
  output 1
  return
}
thread main()
)");
  EXPECT_EQ(r.trace.status, TraceStatus::Terminated);
  EXPECT_EQ(r.metrics.synch, 2);
}

TEST(Interpreter, Deterministic) {
  const char* text = R"(
class C { fields f; }
global c = new C
fn inc(o) {
b0:
  v = getfield o, C.f
  n = add v, 1
  putfield o, C.f, n
  output n
  return
}
thread inc(@c)
thread inc(@c)
)";
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    RunOptions o;
    o.policy = SchedulePolicy::random(seed);
    auto a = run_text(text, o);
    auto b = run_text(text, o);
    EXPECT_EQ(a.trace, b.trace);
    EXPECT_EQ(a.metrics, b.metrics);
  }
}

TEST(Interpreter, SchedulePolicyParsing) {
  auto p = SchedulePolicy::parse("rr:3");
  EXPECT_EQ(p.kind, SchedulePolicy::Kind::RoundRobin);
  EXPECT_EQ(p.quantum, 3);
  p = SchedulePolicy::parse("explicit:1,2,1");
  EXPECT_EQ(p.choices, (std::vector<int>{1, 2, 1}));
  EXPECT_THROW(SchedulePolicy::parse("bogus"), Error);
}
