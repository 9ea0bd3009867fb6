#include "cirlab/error.hpp"
#include "cirlab/passes.hpp"

namespace cirlab {

const std::vector<std::string>& pass_names() {
  static const std::vector<std::string> names = {
      "pea_atomic", "lock_coarsen", "atomic_coalesce", "handle_simplify", "guard_motion", "loop_vectorize", "dup_simulate",
  };
  return names;
}

PassResult run_pass(const Program& p, std::string_view name, const PassOptions& options) {
  if (name == "pea_atomic") return pea_atomic(p);
  if (name == "lock_coarsen") return lock_coarsen(p, options.chunk);
  if (name == "atomic_coalesce") return atomic_coalesce(p);
  if (name == "handle_simplify") return handle_simplify(p, options.inline_budget);
  if (name == "guard_motion") return guard_motion(p);
  if (name == "loop_vectorize") return loop_vectorize(p, options.width);
  if (name == "dup_simulate") return dup_simulate(p);
  throw Error("unknown pass '" + std::string(name) + "'");
}

PipelineResult pipeline(const Program& p, const std::vector<std::string>& passes, const PassOptions& options) {
  for (const auto& name : passes) {
    if (std::find(pass_names().begin(), pass_names().end(), name) == pass_names().end()) {
      throw Error("unknown pass '" + name + "'");
    }
  }
  PipelineResult out{p, {}};
  for (const auto& name : passes) {
    auto r = run_pass(out.program, name, options);
    out.program = std::move(r.program);
    out.reports.push_back(std::move(r.report));
  }
  return out;
}

} // namespace cirlab
