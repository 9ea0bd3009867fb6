#pragma once

// Built-in benchmark corpus. Each program is a small transliteration of a
// pattern one of the passes targets, annotated with the passes it exercises.

#include <string>
#include <string_view>
#include <vector>

#include "cirlab/ir.hpp"
#include "cirlab/passes.hpp"

namespace cirlab {

/// One pass applied to a corpus program.
struct PassCase {
  std::vector<std::string> prerequisites; // applied first, in order
  std::string pass;
  Opcode metric = Opcode::Cas;   // dynamic count the pass is expected to reduce
  bool expect_rewrite = true;    // false: the pass must decline (legality gate)
};

struct CorpusEntry {
  std::string name;
  std::string description;
  std::string source;       // full-size program
  std::string small_source; // variant small enough for exhaustive enumeration
  std::vector<PassCase> cases;
  PassOptions small_options; // options used on the small variant
};

const std::vector<CorpusEntry>& corpus();

/// Throws Error for an unknown name.
const CorpusEntry& corpus_entry(std::string_view name);

Program load(const CorpusEntry& entry, bool small = false);

} // namespace cirlab
