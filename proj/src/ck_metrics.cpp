#include "cirlab/ck_metrics.hpp"

#include <algorithm>
#include <map>
#include <ostream>
#include <set>

namespace cirlab {

namespace {

using Graph = std::map<std::string, std::set<std::string>>;

std::string class_of_function(const std::string& fn) {
  auto dot = fn.find('.');
  return dot == std::string::npos ? std::string() : fn.substr(0, dot);
}

// Functions a body may enter directly.
std::set<std::string> callees(const Program& p, const Function& f) {
  std::set<std::string> out;
  for (const auto& b : f.blocks) {
    for (const auto& in : b.instrs) {
      if (in.op == Opcode::Call || in.op == Opcode::HandleConst) {
        out.insert(in.symbol);
      } else if (in.op == Opcode::CallVirtual) {
        for (const auto& c : p.classes) {
          if (std::find(c.methods.begin(), c.methods.end(), in.symbol) != c.methods.end()) {
            out.insert(method_function_name(c.name, in.symbol));
          }
        }
      }
    }
  }
  return out;
}

// Fields of `cls` (by name) the body touches.
std::set<std::string> own_fields(const Function& f, const std::string& cls) {
  std::set<std::string> out;
  for (const auto& b : f.blocks) {
    for (const auto& in : b.instrs) {
      bool access = in.op == Opcode::GetField || in.op == Opcode::PutField || in.op == Opcode::Cas;
      if (access && in.symbol == cls) out.insert(in.field);
    }
  }
  return out;
}

std::set<std::string> referenced_classes(const Program& p, const Function& f) {
  std::set<std::string> out;
  for (const auto& b : f.blocks) {
    for (const auto& in : b.instrs) {
      switch (in.op) {
        case Opcode::New:
        case Opcode::InstanceOf:
        case Opcode::GetField:
        case Opcode::PutField:
        case Opcode::Cas:
          out.insert(in.symbol);
          break;
        default:
          break;
      }
    }
  }
  for (const auto& callee : callees(p, f)) {
    auto owner = class_of_function(callee);
    if (!owner.empty() && p.find_class(owner)) out.insert(owner);
  }
  return out;
}

} // namespace

const ClassMetrics* CkReport::find(std::string_view name) const {
  for (const auto& c : classes) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

CkReport compute_ck(const Program& p, const CkOptions& options) {
  Graph calls;
  for (const auto& f : p.functions) calls[f.name] = callees(p, f);

  CkReport r;
  for (const auto& c : p.classes) {
    ClassMetrics m;
    m.name = c.name;
    m.wmc = static_cast<int>(c.methods.size());

    std::set<std::string> seen{c.name};
    for (const ClassDef* k = &c; k->superclass;) {
      k = p.find_class(*k->superclass);
      if (!k || !seen.insert(k->name).second) break;
      ++m.dit;
    }
    for (const auto& other : p.classes) {
      if (other.superclass == c.name) ++m.noc;
    }

    std::set<std::string> coupled;
    if (c.superclass) coupled.insert(*c.superclass);
    std::set<std::string> response;
    std::vector<std::set<std::string>> uses;
    for (const auto& method : c.methods) {
      const std::string fn = method_function_name(c.name, method);
      response.insert(fn);
      const Function* body = p.find_function(fn);
      if (!body) {
        uses.emplace_back();
        continue;
      }
      auto refs = referenced_classes(p, *body);
      coupled.insert(refs.begin(), refs.end());
      uses.push_back(own_fields(*body, c.name));
      if (options.transitive_rfc) {
        std::vector<std::string> work{fn};
        while (!work.empty()) {
          auto cur = work.back();
          work.pop_back();
          for (const auto& next : calls[cur]) {
            if (response.insert(next).second) work.push_back(next);
          }
        }
      } else {
        response.insert(calls[fn].begin(), calls[fn].end());
      }
    }
    coupled.erase(c.name);
    m.cbo = static_cast<int>(coupled.size());
    m.rfc = static_cast<int>(response.size());

    int disjoint = 0, sharing = 0;
    for (std::size_t i = 0; i < uses.size(); ++i) {
      for (std::size_t j = i + 1; j < uses.size(); ++j) {
        bool share = std::any_of(uses[i].begin(), uses[i].end(), [&](const std::string& f) { return uses[j].count(f) > 0; });
        ++(share ? sharing : disjoint);
      }
    }
    m.lcom = std::max(0, disjoint - sharing);
    r.classes.push_back(m);
  }

  for (const auto& m : r.classes) {
    r.sum.wmc += m.wmc;
    r.sum.dit += m.dit;
    r.sum.noc += m.noc;
    r.sum.cbo += m.cbo;
    r.sum.rfc += m.rfc;
    r.sum.lcom += m.lcom;
  }
  if (!r.classes.empty()) {
    const double n = static_cast<double>(r.classes.size());
    r.mean = {r.sum.wmc / n, r.sum.dit / n, r.sum.noc / n, r.sum.cbo / n, r.sum.rfc / n, r.sum.lcom / n};
  }
  return r;
}

void write_ck_csv(std::ostream& out, const CkReport& report) {
  out << "class,WMC,DIT,CBO,NOC,RFC,LCOM\n";
  for (const auto& m : report.classes) {
    out << m.name << ',' << m.wmc << ',' << m.dit << ',' << m.cbo << ',' << m.noc << ',' << m.rfc << ',' << m.lcom << '\n';
  }
  auto row = [&](const char* label, const CkTotals& t) {
    out << label << ',' << t.wmc << ',' << t.dit << ',' << t.cbo << ',' << t.noc << ',' << t.rfc << ',' << t.lcom << '\n';
  };
  row("sum", report.sum);
  row("mean", report.mean);
}

} // namespace cirlab
