#include "cirlab/scheduler.hpp"

#include <string>
#include <unordered_set>
#include <vector>

namespace cirlab {

std::string_view verdict_name(Verdict v) {
  switch (v) {
    case Verdict::Refines:
      return "refines";
    case Verdict::Violates:
      return "violates";
    case Verdict::BoundedOk:
      return "bounded-ok";
  }
  return "?";
}

namespace {

struct Node {
  Machine machine;
  std::vector<int> choices;
  std::size_t next = 0;
  int last = 0; // thread that took the previous step
  int preemptions = 0;
};

} // namespace

ResultSet enumerate(const Program& program, const EnumerateOptions& options) {
  ResultSet out;
  auto compiled = compile(program);
  std::unordered_set<std::string> visited;
  std::string key;

  std::vector<Node> stack;
  // Returns true when the node needs further exploration.
  auto settle = [&](Node& n) {
    if (n.machine.finished()) {
      out.traces.insert(n.machine.result());
      return false;
    }
    if (n.machine.steps() >= options.budget) {
      n.machine.exhaust_budget();
      out.traces.insert(n.machine.result());
      out.exhausted = false;
      return false;
    }
    if (options.memoize) {
      key.clear();
      n.machine.serialize(key);
      if (options.preemptions) {
        key.append(reinterpret_cast<const char*>(&n.last), sizeof n.last);
        key.append(reinterpret_cast<const char*>(&n.preemptions), sizeof n.preemptions);
      }
      if (!visited.insert(key).second) return false;
    }
    ++out.states_explored;
    n.choices = n.machine.enabled();
    if (options.preemptions && n.preemptions >= *options.preemptions && n.last != 0) {
      // Out of context switches: keep running the last thread while it can.
      for (int c : n.choices) {
        if (c == n.last) {
          n.choices = {c};
          break;
        }
      }
    }
    return true;
  };

  Node root{Machine(compiled), {}, 0, 0, 0};
  if (settle(root)) stack.push_back(std::move(root));
  while (!stack.empty()) {
    if (out.states_explored > options.state_limit) {
      out.exhausted = false;
      break;
    }
    Node& top = stack.back();
    if (top.next >= top.choices.size()) {
      stack.pop_back();
      continue;
    }
    int tid = top.choices[top.next++];
    Node child{top.machine, {}, 0, tid, top.preemptions};
    if (top.last != 0 && tid != top.last && top.machine.is_enabled(top.last)) ++child.preemptions;
    child.machine.step(tid);
    if (settle(child)) stack.push_back(std::move(child));
  }
  return out;
}

RefinementResult check_refinement(const Program& original, const Program& transformed,
                                  const EnumerateOptions& options) {
  RefinementResult r;
  r.original = enumerate(original, options);
  r.transformed = enumerate(transformed, options);
  r.states_explored = r.original.states_explored + r.transformed.states_explored;
  for (const auto& t : r.transformed.traces) {
    if (t.status == TraceStatus::Deopt || t.status == TraceStatus::BudgetExhausted) continue;
    if (r.original.traces.count(t) == 0) {
      r.verdict = Verdict::Violates;
      r.witness = t;
      return r;
    }
  }
  r.verdict = r.original.exhausted && r.transformed.exhausted ? Verdict::Refines : Verdict::BoundedOk;
  return r;
}

} // namespace cirlab
