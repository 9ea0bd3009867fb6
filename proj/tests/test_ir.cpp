#include <gtest/gtest.h>

#include <random>
#include <set>

#include "cirlab/cfg.hpp"
#include "cirlab/error.hpp"
#include "cirlab/text.hpp"
#include "cirlab/validate.hpp"

using namespace cirlab;

namespace {

const char* kPeaListing = R"(
class A { fields x; }
class B { fields y; }

fn f(v, v2, v3) {
b0:
  o = new A
  putfield o, A.x, v
  b = new B
  putfield b, B.y, v2
  ok1 = cas o, A.x, v, b
  t = getfield o, A.x
  ok2 = cas t, B.y, v2, v3
  r = getfield o, A.x
  return r
}

fn main() {
b0:
  r = call f(1, 2, 3)
  y = getfield r, B.y
  output y
  return
}

thread main()
)";

bool has_kind(const std::vector<Diagnostic>& ds, Diagnostic::Kind k) {
  for (const auto& d : ds) {
    if (d.kind == k) return true;
  }
  return false;
}

} // namespace

TEST(Parse, MinimalProgram) {
  Program p = parse_program("fn main(){ b0: output(const 7); return }\nthread main()");
  ASSERT_EQ(p.functions.size(), 1u);
  ASSERT_EQ(p.threads.size(), 1u);
  const auto& in = p.functions[0].blocks[0].instrs.at(0);
  EXPECT_EQ(in.op, Opcode::Output);
  EXPECT_EQ(in.operands[0], Operand::integer(7));
  EXPECT_TRUE(validate(p).empty());
}

TEST(Parse, PeaListingHasClassesAAndB) {
  Program p = parse_program(kPeaListing);
  ASSERT_EQ(p.classes.size(), 2u);
  EXPECT_EQ(p.classes[0].name, "A");
  EXPECT_EQ(p.classes[0].fields, std::vector<std::string>{"x"});
  EXPECT_EQ(p.classes[1].name, "B");
  EXPECT_EQ(p.classes[1].fields, std::vector<std::string>{"y"});
  EXPECT_TRUE(validate(p).empty());
}

TEST(Parse, UndeclaredFieldIsResolutionError) {
  const char* text = "class A { fields x; }\nfn main() { b0: o = new A\n putfield o, A.z, 1\n return }\nthread main()";
  EXPECT_THROW(parse_program(text), ResolutionError);
}

TEST(Parse, SyntaxErrorCarriesPosition) {
  try {
    parse_program("fn main() {\nb0:\n  x = add 1,\n  return\n}\nthread main()");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4);
    EXPECT_GT(e.column(), 0);
  }
}

TEST(Parse, PrintParseRoundTrip) {
  Program p = parse_program(kPeaListing);
  std::string printed = print_program(p);
  Program q = parse_program(printed);
  EXPECT_EQ(p, q);
  EXPECT_EQ(print_program(q), printed);
}

TEST(Validate, ClassCycle) {
  Program p = parse_program_unresolved(
      "class A extends B { }\nclass B extends A { }\nfn main() { b0: return }\nthread main()");
  auto ds = validate(p);
  int cycle = 0;
  for (const auto& d : ds) {
    if (d.message.find("cycle") != std::string::npos) ++cycle;
  }
  EXPECT_GE(cycle, 1);
  EXPECT_TRUE(has_kind(ds, Diagnostic::Kind::Structure));
}

TEST(Validate, BlockWithoutTerminator) {
  Program p = parse_program_unresolved("fn main() { b0: output 1\nb1: return }\nthread main()");
  auto ds = validate(p);
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_NE(ds[0].message.find("'b0'"), std::string::npos);
}

TEST(Validate, UseBeforeDefinitionOnSomePath) {
  Program p = parse_program_unresolved(R"(
fn main(c) {
b0:
  cbr c, b1, b2
b1:
  x = const 1
  br b3
b2:
  br b3
b3:
  output x
  return
}
thread main(true)
)");
  auto ds = validate(p);
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_NE(ds[0].message.find("'x'"), std::string::npos);
}

TEST(Validate, EmptyThreadListAndVectorWidth) {
  Program p = parse_program_unresolved("fn main(a) { b0: vbinop add, a, a, a, 0, 1\n return }");
  auto ds = validate(p);
  EXPECT_EQ(ds.size(), 2u);
}

namespace {

Function cfg_function(int n, const std::vector<std::pair<int, int>>& edges) {
  Function f;
  f.name = "g";
  for (int i = 0; i < n; ++i) {
    BasicBlock b;
    b.label = "b" + std::to_string(i);
    std::vector<int> out;
    for (auto [a, c] : edges) {
      if (a == i) out.push_back(c);
    }
    if (out.empty()) {
      b.term = Terminator::ret();
    } else if (out.size() == 1) {
      b.term = Terminator::br({"b" + std::to_string(out[0]), {}});
    } else {
      b.term = Terminator::cond_br(Operand::boolean(true), {"b" + std::to_string(out[0]), {}},
                                   {"b" + std::to_string(out[1]), {}});
    }
    f.blocks.push_back(b);
  }
  return f;
}

// a dominates b iff b is unreachable from the entry once a is removed.
bool brute_dominates(int n, const std::vector<std::pair<int, int>>& edges, int a, int b) {
  std::vector<char> seen(static_cast<std::size_t>(n), 0);
  std::vector<int> work;
  if (a != 0) {
    seen[0] = 1;
    work.push_back(0);
  }
  while (!work.empty()) {
    int x = work.back();
    work.pop_back();
    for (auto [s, t] : edges) {
      if (s == x && t != a && !seen[static_cast<std::size_t>(t)]) {
        seen[static_cast<std::size_t>(t)] = 1;
        work.push_back(t);
      }
    }
  }
  return !seen[static_cast<std::size_t>(b)];
}

} // namespace

TEST(Dominators, StraightLine) {
  auto info = dominators(cfg_function(3, {{0, 1}, {1, 2}}));
  EXPECT_EQ(info.idom.count("b0"), 0u);
  EXPECT_EQ(info.idom.at("b1"), "b0");
  EXPECT_EQ(info.idom.at("b2"), "b1");
}

TEST(Dominators, Diamond) {
  auto info = dominators(cfg_function(4, {{0, 1}, {0, 2}, {1, 3}, {2, 3}}));
  EXPECT_EQ(info.idom.at("b3"), "b0");
}

TEST(Dominators, DiamondWithTail) {
  std::vector<std::pair<int, int>> edges{{0, 1}, {0, 2}, {1, 3}, {2, 3}, {3, 4}};
  auto info = dominators(cfg_function(5, edges));
  EXPECT_EQ(info.idom.at("b4"), "b3");
  EXPECT_TRUE(brute_dominates(5, edges, 3, 4));
  EXPECT_FALSE(brute_dominates(5, edges, 1, 4));
}

TEST(Dominators, UnreachableBlocksReported) {
  auto info = dominators(cfg_function(3, {{0, 1}}));
  EXPECT_EQ(info.unreachable, std::vector<std::string>{"b2"});
  EXPECT_EQ(info.idom.count("b2"), 0u);
}

TEST(Dominators, AgreeWithAllPathsOracleOnRandomGraphs) {
  std::mt19937 rng(7);
  for (int trial = 0; trial < 500; ++trial) {
    int n = 2 + static_cast<int>(rng() % 7);
    std::vector<std::pair<int, int>> edges;
    for (int i = 0; i < n; ++i) {
      int k = static_cast<int>(rng() % 3);
      std::set<int> outs;
      for (int j = 0; j < k; ++j) outs.insert(static_cast<int>(rng() % static_cast<unsigned>(n)));
      outs.erase(0);
      int c = 0;
      for (int t : outs) {
        if (c++ < 2) edges.emplace_back(i, t);
      }
    }
    Function f = cfg_function(n, edges);
    Cfg cfg(f);
    DominatorTree dom(cfg);
    for (int a = 0; a < n; ++a) {
      for (int b = 0; b < n; ++b) {
        if (!cfg.reachable(a) || !cfg.reachable(b)) continue;
        EXPECT_EQ(dom.dominates(a, b), brute_dominates(n, edges, a, b)) << "trial " << trial << " a=" << a << " b=" << b;
      }
    }
  }
}

TEST(Loops, NaturalLoopsInnermostFirst) {
  // b0 -> b1 (outer header) -> b2 (inner header) -> b3 -> b2 ; b2 -> b4 -> b1 ; b1 -> b5
  std::vector<std::pair<int, int>> edges{{0, 1}, {1, 2}, {1, 5}, {2, 3}, {2, 4}, {3, 2}, {4, 1}};
  Function f = cfg_function(6, edges);
  Cfg cfg(f);
  DominatorTree dom(cfg);
  auto loops = find_loops(cfg, dom);
  ASSERT_EQ(loops.size(), 2u);
  EXPECT_EQ(loops[0].header, 2);
  EXPECT_EQ(loops[0].blocks, (std::vector<int>{2, 3}));
  EXPECT_EQ(loops[1].header, 1);
  EXPECT_EQ(loops[1].blocks, (std::vector<int>{1, 2, 3, 4}));
  EXPECT_EQ(loops[1].entering, std::vector<int>{0});
}
