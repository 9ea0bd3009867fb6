// Acceptance gate: one PASS/FAIL line per criterion. Exit status is the
// number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "cirlab/ck_metrics.hpp"
#include "cirlab/corpus.hpp"
#include "cirlab/error.hpp"
#include "cirlab/interpreter.hpp"
#include "cirlab/metrics_pca.hpp"
#include "cirlab/passes.hpp"
#include "cirlab/scheduler.hpp"
#include "cirlab/stats.hpp"
#include "cirlab/text.hpp"
#include "cirlab/validate.hpp"

using namespace cirlab;

namespace {

// Collects failed conditions of one criterion.
struct Check {
  std::vector<std::string> failures;

  void expect(bool ok, const std::string& what) {
    if (!ok) failures.push_back(what);
  }
  template <class A, class B>
  void equal(const A& got, const B& want, const std::string& what) {
    if (!(got == want)) {
      std::ostringstream s;
      s << what << ": got " << got << ", want " << want;
      failures.push_back(s.str());
    }
  }
  void near(double got, double want, double tol, const std::string& what) {
    if (!(std::abs(got - want) <= tol)) {
      std::ostringstream s;
      s.precision(12);
      s << what << ": got " << got << ", want " << want << " +- " << tol;
      failures.push_back(s.str());
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::int64_t static_count(const Program& p, Opcode op, std::string_view fn = {}) {
  std::int64_t n = 0;
  for (const auto& f : p.functions) {
    if (!fn.empty() && f.name != fn) continue;
    for (const auto& b : f.blocks) {
      for (const auto& in : b.instrs) n += in.op == op;
    }
  }
  return n;
}

std::int64_t static_new(const Program& p, std::string_view cls) {
  std::int64_t n = 0;
  for (const auto& f : p.functions) {
    for (const auto& b : f.blocks) {
      for (const auto& in : b.instrs) n += in.op == Opcode::New && in.symbol == cls;
    }
  }
  return n;
}

Program with_thread(Program p, const std::string& fn, std::vector<Operand> args) {
  p.threads = {ThreadSpec{fn, std::move(args)}};
  return p;
}

RunOptions traced() {
  RunOptions o;
  o.record_events = true;
  return o;
}

// ---- criteria -----------------------------------------------------------

void pea_golden(Check& c) {
  auto t0 = Clock::now();
  Program p = load(corpus_entry("pea-cas-mini"));
  auto r = pea_atomic(p);
  const Function* f = r.program.find_function("f");
  c.equal(static_new(r.program, "B"), 1, "allocations of B");
  c.equal(static_new(r.program, "A"), 0, "allocations of A");
  c.equal(static_count(r.program, Opcode::New, "f"), 1, "allocations in f");
  c.equal(static_count(r.program, Opcode::Cas), 0, "CAS instructions");
  c.expect(f && f->blocks.size() == 1 && f->blocks[0].term->kind == Terminator::Kind::Return, "f is one block returning");
  c.expect(run(p).trace == run(r.program).trace, "single-thread trace identical");
  c.expect(seconds_since(t0) < 1.0, "runtime under 1 s");
}

void coarsening(Check& c) {
  Program p = load(corpus_entry("coarsen-mini"));
  auto r = lock_coarsen(p, 32);
  c.equal(run(p).count(Opcode::MonitorEnter), 100, "monitorenter before");
  c.equal(run(r.program).count(Opcode::MonitorEnter), 4, "monitorenter after (N=100, C=32)");
  auto t0 = Clock::now();
  Program small = load(corpus_entry("coarsen-mini"), true);
  c.equal(small.threads.size(), 2u, "contending threads");
  auto rs = lock_coarsen(small, 2);
  c.expect(rs.report.rewrites == 1, "small variant coarsened");
  auto check = check_refinement(small, rs.program);
  c.equal(verdict_name(check.verdict), std::string_view("refines"), "N=6, C=2 verdict");
  c.expect(seconds_since(t0) < 10.0, "refinement under 10 s");
}

void coalescing(Check& c) {
  Program p = load(corpus_entry("coalesce-mini"));
  auto r = atomic_coalesce(p);
  c.equal(static_count(p, Opcode::Cas), 2, "static CAS before");
  c.equal(static_count(r.program, Opcode::Cas), 1, "static CAS after");
  auto t0 = Clock::now();
  Program small = load(corpus_entry("coalesce-mini"), true);
  c.equal(small.threads.size(), 2u, "threads");
  auto check = check_refinement(small, atomic_coalesce(small).program);
  c.equal(verdict_name(check.verdict), std::string_view("refines"), "2-thread verdict");
  c.expect(seconds_since(t0) < 10.0, "refinement under 10 s");
  // update does x -> x + 1 then x -> 2x; seeded reports the fused result.
  std::mt19937_64 rng(20240601);
  std::uniform_int_distribution<std::int64_t> dist(-1'000'000, 1'000'000);
  int bad = 0;
  for (int i = 0; i < 1000; ++i) {
    const std::int64_t s = dist(rng);
    auto res = run(with_thread(r.program, "seeded", {Operand::global("counter"), Operand::integer(s)}));
    auto orig = run(with_thread(p, "seeded", {Operand::global("counter"), Operand::integer(s)}));
    bad += res.trace.events != std::vector<std::int64_t>{(s + 1) * 2} || res.trace != orig.trace;
  }
  c.equal(bad, 0, "random inputs where fused update != f2(f1(x))");
}

void guard_motion_check(Check& c) {
  Program p = load(corpus_entry("guard-loop"));
  auto r = guard_motion(p);
  auto before = run(p), after = run(r.program);
  c.equal(before.count(Opcode::Guard), 1000, "guard executions before");
  c.expect(after.count(Opcode::Guard) <= 3, "guard executions after <= 3 (got " + std::to_string(after.count(Opcode::Guard)) + ")");
  c.expect(before.trace == after.trace, "trace preserved");
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<std::int64_t> dist(-20, 60);
  int bad = 0, optimized_ok = 0;
  for (int i = 0; i < 200; ++i) {
    std::vector<Operand> args{Operand::integer(dist(rng)), Operand::integer(dist(rng))};
    auto opt = run(with_thread(r.program, "scan", args));
    auto orig = run(with_thread(p, "scan", args));
    if (opt.trace.status != TraceStatus::Deopt) {
      ++optimized_ok;
      bad += opt.trace != orig.trace;
    }
    bad += orig.trace.status == TraceStatus::Deopt && opt.trace.status != TraceStatus::Deopt;
  }
  c.equal(bad, 0, "(N,L) pairs where the hoisted guard does not imply the original");
  c.expect(optimized_ok > 0 && optimized_ok < 200, "both guard outcomes exercised");
}

void vectorization(Check& c) {
  Program p8 = with_thread(load(corpus_entry("vadd")), "main", {Operand::integer(8), Operand::integer(42)});
  auto r = pipeline(p8, {"guard_motion", "loop_vectorize"}, {.width = 4});
  auto after = run(r.program, traced());
  c.equal(after.count(Opcode::VectorBinary), 2, "vbinops at N=8, W=4");
  c.equal(after.count_in("vadd", Opcode::ArrayStore) + after.count_in("vadd", Opcode::ArrayLoad), 0,
          "scalar body array ops in kernel");
  auto full = pipeline(load(corpus_entry("vadd")), {"guard_motion", "loop_vectorize"});
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::int64_t> len(0, 64), seed(0, 1'000'000);
  int bad = 0;
  for (int i = 0; i < 1000; ++i) {
    std::vector<Operand> args{Operand::integer(len(rng)), Operand::integer(seed(rng))};
    bad += run(with_thread(load(corpus_entry("vadd")), "main", args)).trace != run(with_thread(full.program, "main", args)).trace;
  }
  c.equal(bad, 0, "random arrays with differing outputs");
  auto alone = loop_vectorize(load(corpus_entry("vadd")));
  bool guard_skip = false;
  for (const auto& s : alone.report.skipped) guard_skip |= s.reason == "guard-present";
  c.expect(alone.report.rewrites == 0 && guard_skip, "without guard_motion: guard-present skip");
}

void dbds(Check& c) {
  Program p = load(corpus_entry("instanceof-diamond"));
  auto r = dup_simulate(p);
  auto before = run(p, traced()), after = run(r.program, traced());
  const auto calls = before.count_in("main", Opcode::Call);
  c.equal(calls, 2, "calls of test per run");
  c.equal(before.count_in("test", Opcode::InstanceOf), 2 * calls, "instanceof before");
  c.equal(after.count_in("test", Opcode::InstanceOf), 1 * calls, "instanceof after");
  c.expect(before.trace == after.trace, "trace preserved");
  Program expected = parse_program(R"(class Shape { }
class C extends Shape { }
fn a() { b0: return }
fn b() { b0: return }
fn c() { b0: return }
fn test(x) {
b0:
  t = instanceof x, C
  cbr t, then, else
then:
  call a()
  br again
else:
  call b()
  br end
again:
  call c()
  br end
end:
  return
}
thread test(null)
)");
  c.expect(*r.program.find_function("test") == *expected.find_function("test"), "CFG matches the duplicated listing");
}

void handles(Check& c) {
  Program p = load(corpus_entry("lambda-histogram"));
  auto r = handle_simplify(p);
  c.equal(static_count(p, Opcode::CallHandle), 5, "constant-handle callsites before");
  c.equal(static_count(r.program, Opcode::CallHandle), 0, "callhandle after");
  c.equal(r.report.counters["callsites-devirtualized"], 5, "devirtualized");
  c.equal(r.report.counters["bodies-inlined"], 5, "inlined");
  auto before = run(p), after = run(r.program);
  c.expect(before.trace == after.trace, "trace preserved");
  const auto iterations = p.threads.at(0).args.at(0).imm;
  c.expect(before.metrics.method - after.metrics.method >= 5 * iterations,
           "method metric drop per iteration >= 5 (got " +
               std::to_string(static_cast<double>(before.metrics.method - after.metrics.method) / static_cast<double>(iterations)) + ")");
}

void refinement_self_test(Check& c) {
  Program p = load(corpus_entry("racing-outputs"));
  auto rs = enumerate(p);
  std::set<ResultTrace> want{{{1, 2}, TraceStatus::Terminated, ""}, {{2, 1}, TraceStatus::Terminated, ""}};
  c.expect(rs.traces == want, "R = {[1,2],[2,1]}");
  c.expect(rs.exhausted, "enumeration exhaustive");
  // A broken pass: every return first prints 99.
  Program bug = p;
  for (auto& f : bug.functions) {
    for (auto& b : f.blocks) {
      if (b.term && b.term->kind == Terminator::Kind::Return) {
        Instruction out;
        out.op = Opcode::Output;
        out.operands = {Operand::integer(99)};
        b.instrs.push_back(out);
      }
    }
  }
  auto r = check_refinement(p, bug);
  c.equal(verdict_name(r.verdict), std::string_view("violates"), "injected bug verdict");
  c.expect(r.witness && !rs.traces.count(*r.witness), "witness outside R");
}

MetricMatrix published_table() {
  auto f = read_csv_file(std::string(CIRLAB_DATA_DIR) + "/renaissance_metrics.csv");
  if (!f.diagnostics.empty()) throw Error(f.diagnostics.front());
  return exclude_rows(f.matrix, {"tradebeans", "actors", "scimark.monte_carlo"});
}

void pca(Check& c) {
  auto s = standardize(published_table());
  auto m = pca_fit(s);
  const std::size_t k = m.metrics.size();
  c.equal(k, 11u, "K");
  double worst = 0;
  Matrix vvt = m.loadings * m.loadings.transposed();
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j) worst = std::max(worst, std::abs(vvt(i, j) - (i == j)));
  }
  c.expect(worst <= 1e-9, "loadings orthonormal within 1e-9");
  double sum = 0;
  bool descending = true;
  for (std::size_t i = 0; i < k; ++i) {
    sum += m.eigenvalues[i];
    if (i) descending &= m.eigenvalues[i - 1] >= m.eigenvalues[i];
  }
  c.near(sum, 11.0, 1e-9, "sum of eigenvalues");
  c.expect(descending, "eigenvalues descending");
  Matrix back = m.scores * m.loadings.transposed();
  double err = 0;
  for (std::size_t i = 0; i < back.data.size(); ++i) err = std::max(err, std::abs(back.data[i] - s.y.data[i]));
  c.expect(err <= 1e-9, "Y = S V^T within 1e-9");
  MetricMatrix rank1;
  rank1.cols = {"a", "b"};
  rank1.values.cols = 2;
  for (double x : {1.0, 2.0, 4.0, 7.0}) rank1.add_row("r", {x, 3 * x + 1}, Provenance::Ingested);
  auto r1 = pca_fit(standardize(rank1));
  c.near(r1.eigenvalues[0], 2.0, 1e-9, "rank-1 lambda_1");
  c.near(r1.eigenvalues[1], 0.0, 1e-9, "rank-1 lambda_2");
}

void standardization(Check& c) {
  MetricMatrix m;
  m.cols = {"x", "y"};
  m.values.cols = 2;
  m.add_row("a", {1, 0}, Provenance::Ingested);
  m.add_row("b", {2, 5}, Provenance::Ingested);
  m.add_row("c", {3, 1}, Provenance::Ingested);
  auto s = standardize(m);
  c.expect(s.y(0, 0) == -1.0 && s.y(1, 0) == 0.0 && s.y(2, 0) == 1.0, "{1,2,3} -> {-1,0,1} exactly");
  auto table = standardize(published_table());
  double worst = 0;
  for (std::size_t j = 0; j < table.y.cols; ++j) {
    double mean = 0;
    for (std::size_t i = 0; i < table.y.rows; ++i) mean += table.y(i, j);
    worst = std::max(worst, std::abs(mean / static_cast<double>(table.y.rows)));
  }
  c.expect(worst < 1e-9, "published dataset column means < 1e-9");
}

void welch(Check& c) {
  auto r = welch_t({{1, 2, 3}, "a"}, {{2, 3, 4}, "b"});
  c.near(r.t, -1.2247, 1e-3, "t");
  c.near(r.df, 4.0, 1e-9, "df");
  c.near(r.p, 0.2872, 1e-3, "p");
}

void ck(Check& c) {
  const std::string cohesion = R"(class K { fields f, g; methods m1, m2, m3; }
fn K.m1(self) { b0: x = getfield self, K.f
 return x }
fn K.m2(self) { b0: x = getfield self, K.f
 return x }
fn K.m3(self) { b0: x = getfield self, K.g
 return x }
)";
  const std::string hierarchy = "class A { }\nclass B extends A { }\nclass C extends A { }\n";
  const std::string lonely = "class Lonely { fields z; methods poke; }\nfn Lonely.poke(self) { b0: v = getfield self, Lonely.z\n return }\n";
  auto k = compute_ck(parse_program(cohesion));
  c.equal(k.find("K")->lcom, 1, "LCOM of the 3-method/2-field class");
  auto h = compute_ck(parse_program(hierarchy));
  c.equal(h.find("A")->noc, 2, "NOC(A)");
  c.equal(h.find("B")->dit, 1, "DIT(B)");
  for (const auto& base : {cohesion, hierarchy}) {
    auto before = compute_ck(parse_program(base));
    auto after = compute_ck(parse_program(base + lonely));
    for (const auto& m : before.classes) c.expect(*after.find(m.name) == m, "unreferenced class changed " + m.name);
  }
}

void corpus_ci(Check& c) {
  auto t0 = Clock::now();
  int cases = 0;
  for (const auto& e : corpus()) {
    for (bool small : {false, true}) {
      Program p = load(e, small);
      c.expect(validate(p).empty(), e.name + " validates");
      c.expect(run(p).trace.status == TraceStatus::Terminated, e.name + " terminates");
    }
    for (const auto& pc : e.cases) {
      ++cases;
      const std::string tag = e.name + "/" + pc.pass + ": ";
      Program base = pipeline(load(e), pc.prerequisites).program;
      auto out = run_pass(base, pc.pass);
      c.expect(validate(out.program).empty(), tag + "output validates");
      if (!pc.expect_rewrite) {
        c.expect(out.report.rewrites == 0 && out.program == base, tag + "declines");
        continue;
      }
      c.expect(out.report.rewrites > 0, tag + "rewrites");
      c.expect(run_pass(out.program, pc.pass).program == out.program, tag + "idempotent");
      RunOptions ro;
      ro.policy = SchedulePolicy::round_robin(100);
      auto before = run(base, ro), after = run(out.program, ro);
      c.expect(after.count(pc.metric) < before.count(pc.metric), tag + "target metric improves");
      if (base.threads.size() == 1) c.expect(before.trace == after.trace, tag + "single-thread trace");
      Program small = pipeline(load(e, true), pc.prerequisites, e.small_options).program;
      auto check = check_refinement(small, run_pass(small, pc.pass, e.small_options).program);
      c.expect(check.verdict != Verdict::Violates, tag + "refinement");
    }
  }
  c.expect(cases >= 10, "at least 10 program/pass cases");
  c.expect(seconds_since(t0) < 300.0, "under 5 minutes");
}

} // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria = {
      {"PEA golden test", pea_golden},
      {"lock coarsening counts and refinement", coarsening},
      {"atomic coalescing", coalescing},
      {"guard motion", guard_motion_check},
      {"loop vectorization", vectorization},
      {"duplication simulation golden test", dbds},
      {"method-handle simplification", handles},
      {"refinement checker self-test", refinement_self_test},
      {"PCA on the published metric table", pca},
      {"standardization", standardization},
      {"Welch t-test", welch},
      {"CK metrics", ck},
      {"full corpus invariant suite", corpus_ci},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Check c;
    auto t0 = Clock::now();
    try {
      criteria[i].second(c);
    } catch (const std::exception& e) {
      c.failures.push_back(std::string("exception: ") + e.what());
    }
    char timing[32];
    std::snprintf(timing, sizeof timing, "%.2fs", seconds_since(t0));
    std::cout << (c.failures.empty() ? "PASS" : "FAIL") << "  " << i + 1 << ". " << criteria[i].first << " (" << timing
              << ")\n";
    for (const auto& f : c.failures) std::cout << "      " << f << '\n';
    failed += !c.failures.empty();
  }
  std::cout << criteria.size() - static_cast<std::size_t>(failed) << "/" << criteria.size() << " criteria passed\n";
  return failed;
}
