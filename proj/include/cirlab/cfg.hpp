#pragma once

// Control-flow graph views over a Function: successor/predecessor lists,
// dominators (Cooper-Harvey-Kennedy), and natural loops.

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "cirlab/ir.hpp"

namespace cirlab {

class Cfg {
 public:
  explicit Cfg(const Function& fn);

  std::size_t size() const { return labels_.size(); }
  /// -1 when the label does not exist.
  int index_of(std::string_view label) const;
  const std::string& label(int block) const { return labels_[static_cast<std::size_t>(block)]; }
  const std::vector<int>& succs(int block) const { return succs_[static_cast<std::size_t>(block)]; }
  const std::vector<int>& preds(int block) const { return preds_[static_cast<std::size_t>(block)]; }
  bool reachable(int block) const { return rpo_index_[static_cast<std::size_t>(block)] >= 0; }
  const std::vector<int>& reverse_postorder() const { return rpo_; }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, int> index_;
  std::vector<std::vector<int>> succs_;
  std::vector<std::vector<int>> preds_;
  std::vector<int> rpo_;
  std::vector<int> rpo_index_;
};

class DominatorTree {
 public:
  explicit DominatorTree(const Cfg& cfg);

  /// Immediate dominator; empty for the entry block and unreachable blocks.
  std::optional<int> idom(int block) const;
  /// Reflexive dominance. Unreachable blocks dominate nothing and are dominated by nothing.
  bool dominates(int a, int b) const;

 private:
  std::vector<int> idom_; // -1: none
  std::vector<int> depth_;
};

struct DominatorInfo {
  std::map<std::string, std::string> idom; // block -> immediate dominator; entry absent
  std::vector<std::string> unreachable;
};

/// Immediate dominators by label. Unreachable blocks are reported and left out of the map.
DominatorInfo dominators(const Function& fn);

struct Loop {
  int header = -1;
  std::vector<int> blocks;   // sorted, includes the header
  std::vector<int> latches;  // in-loop predecessors of the header
  std::vector<int> entering; // out-of-loop predecessors of the header
  std::vector<std::pair<int, int>> exits; // (in-loop block, out-of-loop successor)

  bool contains(int block) const;
};

/// Natural loops, one per header, innermost first.
std::vector<Loop> find_loops(const Cfg& cfg, const DominatorTree& dom);

} // namespace cirlab
