#pragma once

// Chidamber & Kemerer class metrics over a guest program.

#include <iosfwd>
#include <string>
#include <vector>

#include "cirlab/ir.hpp"

namespace cirlab {

struct ClassMetrics {
  std::string name;
  int wmc = 0;  // declared methods
  int dit = 0;  // superclass edges up to a root
  int noc = 0;  // immediate subclasses
  int cbo = 0;  // other classes this class refers to
  int rfc = 0;  // own methods plus methods they may invoke
  int lcom = 0; // max(0, P - Q) over method pairs

  friend bool operator==(const ClassMetrics&, const ClassMetrics&) = default;
};

struct CkTotals {
  double wmc = 0, dit = 0, noc = 0, cbo = 0, rfc = 0, lcom = 0;
};

struct CkReport {
  std::vector<ClassMetrics> classes; // declaration order
  CkTotals sum;
  CkTotals mean;

  const ClassMetrics* find(std::string_view name) const;
};

struct CkOptions {
  /// RFC counts every method reachable through the call graph instead of
  /// direct callees only.
  bool transitive_rfc = false;
};

/// Coupling and response are computed from the bodies of method functions
/// ("<Class>.<method>"). A virtual call to `m` counts every class declaring
/// `m` as a possible target.
CkReport compute_ck(const Program& p, const CkOptions& options = {});

/// "class,WMC,DIT,CBO,NOC,RFC,LCOM" rows followed by "sum" and "mean" rows.
void write_ck_csv(std::ostream& out, const CkReport& report);

} // namespace cirlab
