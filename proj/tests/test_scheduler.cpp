#include <gtest/gtest.h>

#include <random>

#include "cirlab/scheduler.hpp"
#include "cirlab/text.hpp"

using namespace cirlab;

namespace {

ResultTrace terminated(std::vector<std::int64_t> events) { return {std::move(events), TraceStatus::Terminated, {}}; }

const char* kRacingOutputs = "fn t(id) { b0: output id\n return }\nthread t(1)\nthread t(2)";

// Non-atomic increment by two threads; thread 2 waits for thread 1 and prints the final value.
const char* kRacyCounter = R"(
class Counter { fields n; }
global c = new Counter
fn first(o) {
b0:
  v = getfield o, Counter.n
  w = add v, 1
  putfield o, Counter.n, w
  unpark 2
  return
}
fn second(o) {
b0:
  v = getfield o, Counter.n
  w = add v, 1
  putfield o, Counter.n, w
  park
  r = getfield o, Counter.n
  output r
  return
}
thread first(@c)
thread second(@c)
)";

} // namespace

TEST(Enumerate, SingleThread) {
  auto rs = enumerate(parse_program("fn main() { b0: output 7\n return }\nthread main()"));
  EXPECT_TRUE(rs.exhausted);
  EXPECT_EQ(rs.traces, (std::set<ResultTrace>{terminated({7})}));
}

TEST(Enumerate, RacingOutputs) {
  auto rs = enumerate(parse_program(kRacingOutputs));
  EXPECT_TRUE(rs.exhausted);
  EXPECT_EQ(rs.traces, (std::set<ResultTrace>{terminated({1, 2}), terminated({2, 1})}));
}

TEST(Enumerate, RacyCounter) {
  auto rs = enumerate(parse_program(kRacyCounter));
  EXPECT_TRUE(rs.exhausted);
  EXPECT_EQ(rs.traces, (std::set<ResultTrace>{terminated({1}), terminated({2})}));
}

TEST(Enumerate, MemoizationDoesNotChangeResults) {
  for (const char* text : {kRacingOutputs, kRacyCounter}) {
    Program p = parse_program(text);
    EnumerateOptions on;
    EnumerateOptions off;
    off.memoize = false;
    auto a = enumerate(p, on);
    auto b = enumerate(p, off);
    EXPECT_EQ(a.traces, b.traces);
    EXPECT_LE(a.states_explored, b.states_explored);
  }
}

TEST(Enumerate, AgreesWithRandomSchedules) {
  Program p = parse_program(kRacyCounter);
  auto rs = enumerate(p);
  std::set<ResultTrace> sampled;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    RunOptions o;
    o.policy = SchedulePolicy::random(seed);
    auto t = run(p, o).trace;
    EXPECT_EQ(rs.traces.count(t), 1u) << format_trace(t);
    sampled.insert(t);
  }
  EXPECT_EQ(sampled, rs.traces);
}

TEST(Enumerate, BudgetCutMarksNotExhausted) {
  EnumerateOptions o;
  o.budget = 3;
  auto rs = enumerate(parse_program(kRacyCounter), o);
  EXPECT_FALSE(rs.exhausted);
}

TEST(Enumerate, PreemptionBoundShrinksSearch) {
  Program p = parse_program(kRacyCounter);
  EnumerateOptions o;
  o.preemptions = 0;
  auto rs = enumerate(p, o);
  EXPECT_TRUE(rs.traces.count(terminated({2})) == 1);
  EXPECT_LE(rs.traces.size(), 2u);
}

TEST(Refinement, IdentityRefines) {
  Program p = parse_program(kRacyCounter);
  auto r = check_refinement(p, p);
  EXPECT_EQ(r.verdict, Verdict::Refines);
  EXPECT_FALSE(r.witness);
}

TEST(Refinement, ExtraOutputViolates) {
  Program p = parse_program(kRacingOutputs);
  Program q = parse_program("fn t(id) { b0: output id\n output 99\n return }\nthread t(1)\nthread t(2)");
  auto r = check_refinement(p, q);
  EXPECT_EQ(r.verdict, Verdict::Violates);
  ASSERT_TRUE(r.witness);
  EXPECT_EQ(r.witness->events.back(), 99);
}

TEST(Refinement, MutualRefinementMeansEqualSets) {
  Program p = parse_program(kRacingOutputs);
  Program q = parse_program("fn t(id) { b0: x = add id, 0\n output x\n return }\nthread t(1)\nthread t(2)");
  auto a = check_refinement(p, q);
  auto b = check_refinement(q, p);
  ASSERT_EQ(a.verdict, Verdict::Refines);
  ASSERT_EQ(b.verdict, Verdict::Refines);
  EXPECT_EQ(a.original.traces, b.original.traces);
}

TEST(Refinement, BudgetCutDowngradesToBoundedOk) {
  Program p = parse_program("fn main() { b0: output 1\n br l\nl: br l }\nthread main()");
  EnumerateOptions o;
  o.budget = 20;
  auto r = check_refinement(p, p, o);
  EXPECT_EQ(r.verdict, Verdict::BoundedOk);
}
