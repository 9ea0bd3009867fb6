#pragma once

#include <string>
#include <vector>

#include "cirlab/ir.hpp"

namespace cirlab {

struct Diagnostic {
  enum class Kind : std::uint8_t {
    Resolution, // unknown class, field, function, method, label, or global
    Structure,  // any other broken invariant
  };
  Kind kind = Kind::Structure;
  std::string message;
};

/// Checks every structural invariant of a Program. Returns an empty list iff
/// the program is well formed.
std::vector<Diagnostic> validate(const Program& program);

} // namespace cirlab
