// cirlab command-line driver.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cirlab/ck_metrics.hpp"
#include "cirlab/corpus.hpp"
#include "cirlab/error.hpp"
#include "cirlab/harness.hpp"
#include "cirlab/metrics_pca.hpp"
#include "cirlab/passes.hpp"
#include "cirlab/scheduler.hpp"
#include "cirlab/stats.hpp"
#include "cirlab/text.hpp"
#include "cirlab/validate.hpp"

namespace {

using namespace cirlab;
using nlohmann::json;

constexpr int kOk = 0;
constexpr int kDiagnostics = 1;
constexpr int kViolation = 2;

struct Globals {
  std::uint64_t seed = 1;
  bool json = false;
  bool csv = false;
};

// Reported by main as exit code 1.
struct Diagnostics {
  std::vector<std::string> lines;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write '" + path + "'");
  out << text;
}

/// A path to a .cir file, or "corpus:NAME" / "corpus:NAME/small".
Program load_program(const std::string& spec) {
  Program p;
  if (spec.rfind("corpus:", 0) == 0) {
    std::string name = spec.substr(7);
    bool small = false;
    if (auto slash = name.find('/'); slash != std::string::npos) {
      if (name.substr(slash + 1) != "small") throw Error("unknown corpus variant in '" + spec + "'");
      name.resize(slash);
      small = true;
    }
    p = load(corpus_entry(name), small);
  } else {
    p = parse_program_unresolved(read_file(spec));
  }
  auto diags = validate(p);
  if (!diags.empty()) {
    Diagnostics d;
    for (const auto& x : diags) d.lines.push_back(spec + ": " + x.message);
    throw d;
  }
  return p;
}

std::string display_name(const std::string& spec) {
  if (spec.rfind("corpus:", 0) == 0) return spec.substr(7);
  return std::filesystem::path(spec).stem().string();
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

SchedulePolicy policy_from(const std::string& text, const Globals& g) {
  if (text == "random") return SchedulePolicy::random(g.seed);
  return SchedulePolicy::parse(text);
}

json metrics_json(const MetricVector& m) {
  json j;
  for (auto col : kProfileColumns) j[std::string(col)] = metric_value(m, col);
  return j;
}

json trace_json(const ResultTrace& t) {
  json j{{"events", t.events}, {"status", std::string(trace_status_name(t.status))}};
  if (!t.reason.empty()) j["reason"] = t.reason;
  return j;
}

json report_json(const PassReport& r) {
  json skipped = json::array();
  for (const auto& s : r.skipped) skipped.push_back({{"function", s.function}, {"location", s.location}, {"reason", s.reason}});
  return {{"pass", r.pass},
          {"rewrites", r.rewrites},
          {"counters", r.counters},
          {"details", r.details},
          {"skipped", skipped},
          {"instructions_before", r.instructions_before},
          {"instructions_after", r.instructions_after}};
}

void print_report_text(std::ostream& out, const PassReport& r) {
  out << r.pass << ": " << r.rewrites << " rewrite(s), " << r.instructions_before << " -> " << r.instructions_after
      << " instructions\n";
  for (const auto& [k, v] : r.counters) out << "  " << k << " = " << v << '\n';
  for (const auto& d : r.details) out << "  " << d << '\n';
  for (const auto& s : r.skipped) out << "  skipped " << s.function << ":" << s.location << ": " << s.reason << '\n';
}

std::vector<double> read_samples(const std::string& path) {
  std::vector<double> out;
  std::istringstream in(read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    for (const auto& cell : split_list(line)) {
      std::size_t used = 0;
      double v = 0;
      try {
        v = std::stod(cell, &used);
      } catch (const std::exception&) {
        used = 0;
      }
      if (used == 0) throw Error(path + ": not a number: '" + cell + "'");
      out.push_back(v);
    }
  }
  return out;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"cirlab: guest IR interpreter, optimizer, refinement checker and measurement toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "seed for randomized schedules");
  auto* json_flag = app.add_flag("--json", g.json, "JSON output");
  app.add_flag("--csv", g.csv, "CSV output")->excludes(json_flag);

  std::function<int()> action;
  PassOptions pass_opts;
  auto add_pass_options = [&](CLI::App* cmd) {
    cmd->add_option("--chunk", pass_opts.chunk, "lock_coarsen iterations per monitor hold")->check(CLI::PositiveNumber);
    cmd->add_option("--width", pass_opts.width, "loop_vectorize lanes")->check(CLI::Range(2, 64));
    cmd->add_option("--inline-budget", pass_opts.inline_budget, "handle_simplify callee size limit")
        ->check(CLI::NonNegativeNumber);
  };

  // run
  std::string program_spec, schedule = "rr:1", passes_text;
  std::int64_t budget = 1'000'000;
  auto* run_cmd = app.add_subcommand("run", "execute a program under one schedule");
  run_cmd->add_option("program", program_spec, "file.cir or corpus:NAME[/small]")->required();
  run_cmd->add_option("--schedule", schedule, "rr:K, explicit:T1,T2,..., random[:SEED]");
  run_cmd->add_option("--budget", budget, "step budget")->check(CLI::PositiveNumber);
  run_cmd->callback([&] {
    action = [&] {
      RunOptions ro;
      ro.policy = policy_from(schedule, g);
      ro.budget = budget;
      auto r = run(load_program(program_spec), ro);
      if (g.json) {
        std::cout << json{{"trace", trace_json(r.trace)}, {"steps", r.steps}, {"metrics", metrics_json(r.metrics)}}.dump(2)
                  << '\n';
      } else {
        std::cout << format_trace(r.trace) << '\n';
      }
      bool ok = r.trace.status == TraceStatus::Terminated || r.trace.status == TraceStatus::Deopt;
      return ok ? kOk : kDiagnostics;
    };
  });

  // profile
  std::vector<std::string> profile_specs;
  bool profile_all = false;
  auto* profile_cmd = app.add_subcommand("profile", "dynamic metric vectors, one row per program");
  profile_cmd->add_option("programs", profile_specs, "file.cir or corpus:NAME[/small]");
  profile_cmd->add_flag("--all", profile_all, "every corpus program");
  profile_cmd->add_option("--schedule", schedule, "schedule policy");
  profile_cmd->add_option("--budget", budget, "step budget")->check(CLI::PositiveNumber);
  profile_cmd->callback([&] {
    action = [&] {
      if (profile_all) {
        for (const auto& e : corpus()) profile_specs.push_back("corpus:" + e.name);
      }
      if (profile_specs.empty()) throw Error("profile: no programs given (pass files or --all)");
      std::vector<std::pair<std::string, Program>> programs;
      for (const auto& s : profile_specs) programs.emplace_back(display_name(s), load_program(s));
      RunOptions ro;
      ro.policy = policy_from(schedule, g);
      ro.budget = budget;
      auto m = profile_matrix(programs, ro);
      if (g.json) {
        json rows = json::array();
        for (std::size_t i = 0; i < m.rows.size(); ++i) {
          json row{{"benchmark", m.rows[i]}};
          for (std::size_t j = 0; j < m.cols.size(); ++j) row[m.cols[j]] = static_cast<std::int64_t>(m.values(i, j));
          rows.push_back(row);
        }
        std::cout << rows.dump(2) << '\n';
      } else {
        write_csv(std::cout, m);
      }
      return kOk;
    };
  });

  // optimize
  std::string out_path;
  bool show_report = false;
  auto* opt_cmd = app.add_subcommand("optimize", "apply a pass pipeline and print the result");
  opt_cmd->add_option("program", program_spec, "file.cir or corpus:NAME[/small]")->required();
  opt_cmd->add_option("--passes", passes_text, "comma-separated pass names, applied in order")->required();
  opt_cmd->add_option("-o,--output", out_path, "write the program here instead of stdout");
  opt_cmd->add_flag("--report", show_report, "print pass reports (stderr unless --json)");
  add_pass_options(opt_cmd);
  opt_cmd->callback([&] {
    action = [&] {
      auto r = pipeline(load_program(program_spec), split_list(passes_text), pass_opts);
      if (g.json) {
        json reports = json::array();
        for (const auto& rep : r.reports) reports.push_back(report_json(rep));
        json j{{"reports", reports}};
        if (out_path.empty()) j["program"] = print_program(r.program);
        else write_text(out_path, print_program(r.program));
        std::cout << j.dump(2) << '\n';
        return kOk;
      }
      write_text(out_path, print_program(r.program));
      if (show_report) {
        for (const auto& rep : r.reports) print_report_text(std::cerr, rep);
      }
      return kOk;
    };
  });

  // check
  EnumerateOptions eopts;
  int preemptions = -1;
  auto* check_cmd = app.add_subcommand("check", "exhaustive refinement check of a pass pipeline");
  check_cmd->add_option("program", program_spec, "file.cir or corpus:NAME[/small]")->required();
  check_cmd->add_option("--passes", passes_text, "comma-separated pass names")->required();
  check_cmd->add_option("--budget", eopts.budget, "step budget per execution")->check(CLI::PositiveNumber);
  check_cmd->add_option("--preemptions", preemptions, "context-switch bound (default unbounded)")
      ->check(CLI::NonNegativeNumber);
  check_cmd->add_option("--state-limit", eopts.state_limit, "maximum explored states")->check(CLI::PositiveNumber);
  add_pass_options(check_cmd);
  check_cmd->callback([&] {
    action = [&] {
      if (preemptions >= 0) eopts.preemptions = preemptions;
      auto original = load_program(program_spec);
      auto transformed = pipeline(original, split_list(passes_text), pass_opts);
      auto r = check_refinement(original, transformed.program, eopts);
      auto traces = [](const ResultSet& s) {
        json a = json::array();
        for (const auto& t : s.traces) a.push_back(trace_json(t));
        return a;
      };
      json j{{"verdict", std::string(verdict_name(r.verdict))},
             {"states_explored", r.states_explored},
             {"original", {{"results", traces(r.original)}, {"exhausted", r.original.exhausted}}},
             {"transformed", {{"results", traces(r.transformed)}, {"exhausted", r.transformed.exhausted}}}};
      if (r.witness) j["witness"] = trace_json(*r.witness);
      json rewrites = json::object();
      for (const auto& rep : transformed.reports) rewrites[rep.pass] = rep.rewrites;
      j["rewrites"] = rewrites;
      std::cout << j.dump(2) << '\n';
      return r.verdict == Verdict::Violates ? kViolation : kOk;
    };
  });

  // bench
  BenchOptions bopts;
  auto* bench_cmd = app.add_subcommand("bench", "steady-state cost samples (reference cycles per iteration)");
  bench_cmd->add_option("program", program_spec, "file.cir or corpus:NAME[/small]")->required();
  bench_cmd->add_option("--passes", passes_text, "comma-separated pass names");
  bench_cmd->add_option("--warmup", bopts.warmup, "discarded iterations")->check(CLI::NonNegativeNumber);
  bench_cmd->add_option("--measured", bopts.measured, "recorded iterations")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--schedule", schedule, "schedule policy");
  bench_cmd->add_option("--budget", bopts.budget, "step budget per iteration")->check(CLI::PositiveNumber);
  add_pass_options(bench_cmd);
  bench_cmd->callback([&] {
    action = [&] {
      bopts.policy = policy_from(schedule, g);
      bopts.pass_options = pass_opts;
      auto s = bench(load_program(program_spec), split_list(passes_text), bopts);
      if (g.json) {
        std::cout << json{{"passes", s.label}, {"samples", s.values}, {"mean", mean(s.values)}}.dump(2) << '\n';
      } else {
        std::cout << "iteration,refcycles\n";
        for (std::size_t i = 0; i < s.values.size(); ++i) std::cout << i << ',' << static_cast<std::int64_t>(s.values[i]) << '\n';
      }
      return kOk;
    };
  });

  // compare
  std::string target;
  double winsor = 0.1;
  auto* cmp_cmd = app.add_subcommand("compare", "impact of one pass: pipeline with it vs without it");
  cmp_cmd->add_option("program", program_spec, "file.cir or corpus:NAME[/small]")->required();
  cmp_cmd->add_option("--target", target, "pass to toggle")->required();
  cmp_cmd->add_option("--passes", passes_text, "passes kept on both sides, in order");
  cmp_cmd->add_option("--warmup", bopts.warmup, "discarded iterations")->check(CLI::NonNegativeNumber);
  cmp_cmd->add_option("--measured", bopts.measured, "recorded iterations")->check(CLI::PositiveNumber);
  cmp_cmd->add_option("--winsor", winsor, "Winsorizing fraction")->check(CLI::Range(0.0, 0.4999));
  cmp_cmd->add_option("--schedule", schedule, "schedule policy");
  add_pass_options(cmp_cmd);
  cmp_cmd->callback([&] {
    action = [&] {
      bopts.policy = policy_from(schedule, g);
      bopts.pass_options = pass_opts;
      auto r = compare(load_program(program_spec), display_name(program_spec), split_list(passes_text), target, bopts,
                       winsor);
      if (g.csv) {
        std::cout << format_report(r) << '\n';
      } else {
        std::cout << to_json(r) << '\n';
      }
      return kOk;
    };
  });

  // pca
  std::string metrics_csv, ref_col, skip_text = "cpu", exclude_text, out_dir = ".";
  int components = 4;
  auto* pca_cmd = app.add_subcommand("pca", "normalize, standardize and run PCA on a metric table");
  pca_cmd->add_option("metrics", metrics_csv, "CSV with a 'benchmark' column")->required()->check(CLI::ExistingFile);
  pca_cmd->add_option("--ref", ref_col, "normalizer column (default: refcycles when present; 'none' disables)");
  pca_cmd->add_option("--skip", skip_text, "columns exempt from normalization");
  pca_cmd->add_option("--exclude", exclude_text, "benchmarks to drop");
  pca_cmd->add_option("--components", components, "components in loadings.csv")->check(CLI::PositiveNumber);
  pca_cmd->add_option("--out-dir", out_dir, "directory for loadings.csv, scores.csv, variance.csv");
  pca_cmd->callback([&] {
    action = [&] {
      auto in = read_csv_file(metrics_csv);
      for (const auto& d : in.diagnostics) std::cerr << metrics_csv << ": " << d << '\n';
      auto m = exclude_rows(in.matrix, [&] {
        std::set<std::string, std::less<>> s;
        for (auto& x : split_list(exclude_text)) s.insert(x);
        return s;
      }());
      std::string ref = ref_col;
      if (ref.empty() && m.has_column("refcycles")) ref = "refcycles";
      if (!ref.empty() && ref != "none") {
        std::set<std::string, std::less<>> skip;
        for (auto& x : split_list(skip_text)) skip.insert(x);
        auto n = normalize(m, ref, skip);
        for (const auto& d : n.diagnostics) std::cerr << metrics_csv << ": " << d << '\n';
        m = std::move(n.matrix);
      } else {
        std::cerr << "pca: no normalizer column; standardizing raw values\n";
      }
      m.check();
      auto model = pca_fit(standardize(m));
      auto table = top_components(model, std::min<int>(components, static_cast<int>(model.metrics.size())));
      std::filesystem::create_directories(out_dir);
      auto path = [&](const char* f) { return (std::filesystem::path(out_dir) / f).string(); };
      std::ofstream lo(path("loadings.csv")), sc(path("scores.csv")), va(path("variance.csv"));
      if (!lo || !sc || !va) throw Error("cannot write into '" + out_dir + "'");
      write_loadings_csv(lo, table);
      write_scores_csv(sc, model);
      write_variance_csv(va, model);
      if (g.json) {
        json pcs = json::array();
        for (std::size_t c = 0; c < table.size(); ++c) {
          json col = json::array();
          for (const auto& l : table[c]) col.push_back({{"metric", l.metric}, {"loading", l.loading}});
          pcs.push_back({{"component", c + 1}, {"eigenvalue", model.eigenvalues[c]}, {"explained", model.explained[c]}, {"loadings", col}});
        }
        std::cout << json{{"benchmarks", model.benchmarks.size()}, {"metrics", model.metrics}, {"components", pcs}}.dump(2)
                  << '\n';
      } else {
        write_loadings_csv(std::cout, table);
      }
      return kOk;
    };
  });

  // ck
  std::string ck_out;
  bool transitive = false;
  auto* ck_cmd = app.add_subcommand("ck", "Chidamber & Kemerer class metrics");
  ck_cmd->add_option("program", program_spec, "file.cir or corpus:NAME[/small]")->required();
  ck_cmd->add_flag("--transitive", transitive, "RFC over the transitive call graph");
  ck_cmd->add_option("-o,--output", ck_out, "write ck.csv here instead of stdout");
  ck_cmd->callback([&] {
    action = [&] {
      auto r = compute_ck(load_program(program_spec), {.transitive_rfc = transitive});
      if (g.json) {
        json classes = json::array();
        for (const auto& c : r.classes) {
          classes.push_back({{"class", c.name}, {"WMC", c.wmc}, {"DIT", c.dit}, {"CBO", c.cbo}, {"NOC", c.noc}, {"RFC", c.rfc}, {"LCOM", c.lcom}});
        }
        auto totals = [](const CkTotals& t) {
          return json{{"WMC", t.wmc}, {"DIT", t.dit}, {"CBO", t.cbo}, {"NOC", t.noc}, {"RFC", t.rfc}, {"LCOM", t.lcom}};
        };
        write_text(ck_out, json{{"classes", classes}, {"sum", totals(r.sum)}, {"mean", totals(r.mean)}}.dump(2) + "\n");
      } else {
        std::ostringstream out;
        write_ck_csv(out, r);
        write_text(ck_out, out.str());
      }
      return kOk;
    };
  });

  // stats
  auto* stats_cmd = app.add_subcommand("stats", "measurement statistics");
  stats_cmd->require_subcommand(1);
  std::string file_a, file_b;
  double fraction = 0.1;
  auto* welch_cmd = stats_cmd->add_subcommand("welch", "Welch's two-sample t-test");
  welch_cmd->add_option("a", file_a, "samples, one or more per line")->required()->check(CLI::ExistingFile);
  welch_cmd->add_option("b", file_b, "samples, one or more per line")->required()->check(CLI::ExistingFile);
  welch_cmd->add_option("--winsor", fraction, "Winsorize both samples first")->check(CLI::Range(0.0, 0.4999));
  welch_cmd->callback([&] {
    action = [&] {
      SampleSet a{read_samples(file_a), file_a}, b{read_samples(file_b), file_b};
      if (welch_cmd->count("--winsor")) {
        a = winsorize(a, fraction);
        b = winsorize(b, fraction);
      }
      auto r = welch_t(a, b);
      if (g.csv) {
        std::cout << "t,df,p,degenerate\n" << r.t << ',' << r.df << ',' << r.p << ',' << r.degenerate << '\n';
      } else {
        json t = std::isfinite(r.t) ? json(r.t) : json(r.t > 0 ? "inf" : "-inf");
        std::cout << json{{"t", t}, {"df", r.df}, {"p", r.p}, {"degenerate", r.degenerate}, {"significant", r.p < kSignificanceLevel}}.dump(2)
                  << '\n';
      }
      return kOk;
    };
  });
  auto* win_cmd = stats_cmd->add_subcommand("winsorize", "Winsorized copy of a sample");
  win_cmd->add_option("a", file_a, "samples")->required()->check(CLI::ExistingFile);
  win_cmd->add_option("--fraction", fraction, "fraction clamped at each end")->check(CLI::Range(0.0, 0.4999));
  win_cmd->callback([&] {
    action = [&] {
      auto w = winsorize({read_samples(file_a), file_a}, fraction);
      for (double v : w.values) std::cout << v << '\n';
      return kOk;
    };
  });

  // corpus
  auto* corpus_cmd = app.add_subcommand("corpus", "built-in benchmark programs");
  corpus_cmd->require_subcommand(1);
  auto* list_cmd = corpus_cmd->add_subcommand("list", "names, descriptions and exercised passes");
  list_cmd->callback([&] {
    action = [&] {
      json all = json::array();
      for (const auto& e : corpus()) {
        json cases = json::array();
        for (const auto& c : e.cases) {
          cases.push_back({{"pass", c.pass}, {"prerequisites", c.prerequisites}, {"metric", std::string(opcode_name(c.metric))},
                           {"expect_rewrite", c.expect_rewrite}});
        }
        all.push_back({{"name", e.name}, {"description", e.description}, {"cases", cases}, {"small", !e.small_source.empty()}});
      }
      if (g.json) {
        std::cout << all.dump(2) << '\n';
        return kOk;
      }
      for (const auto& e : corpus()) {
        std::string passes;
        for (const auto& c : e.cases) passes += (passes.empty() ? "" : ",") + c.pass;
        std::cout << e.name << "\t" << (passes.empty() ? "-" : passes) << "\t" << e.description << '\n';
      }
      return kOk;
    };
  });
  std::string export_name;
  bool export_small = false;
  auto* export_cmd = corpus_cmd->add_subcommand("export", "print a corpus program as .cir text");
  export_cmd->add_option("name", export_name, "corpus program")->required();
  export_cmd->add_flag("--small", export_small, "the small enumeration variant");
  export_cmd->add_option("-o,--output", out_path, "write here instead of stdout");
  export_cmd->callback([&] {
    action = [&] {
      write_text(out_path, print_program(load(corpus_entry(export_name), export_small)));
      return kOk;
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kDiagnostics;
  }

  try {
    return action ? action() : kDiagnostics;
  } catch (const Diagnostics& d) {
    for (const auto& l : d.lines) std::cerr << l << '\n';
    return kDiagnostics;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kDiagnostics;
  }
}
