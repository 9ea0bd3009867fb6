#include "cirlab/cfg.hpp"

#include <algorithm>

namespace cirlab {

Cfg::Cfg(const Function& fn) {
  const std::size_t n = fn.blocks.size();
  labels_.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels_.push_back(fn.blocks[i].label);
    index_.emplace(fn.blocks[i].label, static_cast<int>(i));
  }
  succs_.resize(n);
  preds_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!fn.blocks[i].term) continue;
    for (const auto& s : successors(*fn.blocks[i].term)) {
      int t = index_of(s);
      if (t < 0) continue;
      auto& out = succs_[i];
      if (std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
      auto& in = preds_[static_cast<std::size_t>(t)];
      if (std::find(in.begin(), in.end(), static_cast<int>(i)) == in.end()) in.push_back(static_cast<int>(i));
    }
  }

  rpo_index_.assign(n, -1);
  if (n == 0) return;
  // Iterative DFS postorder from the entry.
  std::vector<int> post;
  std::vector<char> seen(n, 0);
  std::vector<std::pair<int, std::size_t>> stack{{0, 0}};
  seen[0] = 1;
  while (!stack.empty()) {
    auto& [b, k] = stack.back();
    const auto& ss = succs_[static_cast<std::size_t>(b)];
    if (k < ss.size()) {
      int s = ss[k++];
      if (!seen[static_cast<std::size_t>(s)]) {
        seen[static_cast<std::size_t>(s)] = 1;
        stack.emplace_back(s, 0);
      }
    } else {
      post.push_back(b);
      stack.pop_back();
    }
  }
  rpo_.assign(post.rbegin(), post.rend());
  for (std::size_t i = 0; i < rpo_.size(); ++i) rpo_index_[static_cast<std::size_t>(rpo_[i])] = static_cast<int>(i);
}

int Cfg::index_of(std::string_view label) const {
  auto it = index_.find(std::string(label));
  return it == index_.end() ? -1 : it->second;
}

DominatorTree::DominatorTree(const Cfg& cfg) {
  const std::size_t n = cfg.size();
  idom_.assign(n, -1);
  depth_.assign(n, 0);
  if (n == 0) return;
  const auto& rpo = cfg.reverse_postorder();
  std::vector<int> order(n, -1);
  for (std::size_t i = 0; i < rpo.size(); ++i) order[static_cast<std::size_t>(rpo[i])] = static_cast<int>(i);

  std::vector<int> doms(n, -1);
  doms[0] = 0;
  auto intersect = [&](int a, int b) {
    while (a != b) {
      while (order[static_cast<std::size_t>(a)] > order[static_cast<std::size_t>(b)]) a = doms[static_cast<std::size_t>(a)];
      while (order[static_cast<std::size_t>(b)] > order[static_cast<std::size_t>(a)]) b = doms[static_cast<std::size_t>(b)];
    }
    return a;
  };
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 1; i < rpo.size(); ++i) {
      int b = rpo[i];
      int new_idom = -1;
      for (int p : cfg.preds(b)) {
        if (doms[static_cast<std::size_t>(p)] < 0) continue;
        new_idom = new_idom < 0 ? p : intersect(p, new_idom);
      }
      if (new_idom >= 0 && doms[static_cast<std::size_t>(b)] != new_idom) {
        doms[static_cast<std::size_t>(b)] = new_idom;
        changed = true;
      }
    }
  }
  for (std::size_t i = 0; i < rpo.size(); ++i) {
    int b = rpo[i];
    if (b == 0) continue;
    idom_[static_cast<std::size_t>(b)] = doms[static_cast<std::size_t>(b)];
    depth_[static_cast<std::size_t>(b)] = depth_[static_cast<std::size_t>(doms[static_cast<std::size_t>(b)])] + 1;
  }
  for (std::size_t b = 0; b < n; ++b) {
    if (!cfg.reachable(static_cast<int>(b))) depth_[b] = -1;
  }
}

std::optional<int> DominatorTree::idom(int block) const {
  int d = idom_[static_cast<std::size_t>(block)];
  if (d < 0) return std::nullopt;
  return d;
}

bool DominatorTree::dominates(int a, int b) const {
  if (depth_[static_cast<std::size_t>(a)] < 0 || depth_[static_cast<std::size_t>(b)] < 0) return false;
  while (depth_[static_cast<std::size_t>(b)] > depth_[static_cast<std::size_t>(a)]) b = idom_[static_cast<std::size_t>(b)];
  return a == b;
}

DominatorInfo dominators(const Function& fn) {
  Cfg cfg(fn);
  DominatorTree dom(cfg);
  DominatorInfo info;
  for (std::size_t b = 0; b < cfg.size(); ++b) {
    if (!cfg.reachable(static_cast<int>(b))) {
      info.unreachable.push_back(cfg.label(static_cast<int>(b)));
      continue;
    }
    if (auto d = dom.idom(static_cast<int>(b))) info.idom.emplace(cfg.label(static_cast<int>(b)), cfg.label(*d));
  }
  return info;
}

bool Loop::contains(int block) const { return std::binary_search(blocks.begin(), blocks.end(), block); }

std::vector<Loop> find_loops(const Cfg& cfg, const DominatorTree& dom) {
  std::map<int, std::vector<int>> latches_by_header;
  for (int b : cfg.reverse_postorder()) {
    for (int s : cfg.succs(b)) {
      if (dom.dominates(s, b)) latches_by_header[s].push_back(b);
    }
  }
  std::vector<Loop> loops;
  for (auto& [header, latches] : latches_by_header) {
    Loop loop;
    loop.header = header;
    loop.latches = latches;
    std::vector<char> in(cfg.size(), 0);
    in[static_cast<std::size_t>(header)] = 1;
    std::vector<int> work;
    for (int l : latches) {
      if (!in[static_cast<std::size_t>(l)]) {
        in[static_cast<std::size_t>(l)] = 1;
        work.push_back(l);
      }
    }
    while (!work.empty()) {
      int b = work.back();
      work.pop_back();
      for (int p : cfg.preds(b)) {
        if (!cfg.reachable(p) || in[static_cast<std::size_t>(p)]) continue;
        in[static_cast<std::size_t>(p)] = 1;
        work.push_back(p);
      }
    }
    for (std::size_t b = 0; b < cfg.size(); ++b) {
      if (!in[b]) continue;
      loop.blocks.push_back(static_cast<int>(b));
      for (int s : cfg.succs(static_cast<int>(b))) {
        if (!in[static_cast<std::size_t>(s)]) loop.exits.emplace_back(static_cast<int>(b), s);
      }
    }
    for (int p : cfg.preds(header)) {
      if (!in[static_cast<std::size_t>(p)] && cfg.reachable(p)) loop.entering.push_back(p);
    }
    loops.push_back(std::move(loop));
  }
  std::stable_sort(loops.begin(), loops.end(),
                   [](const Loop& a, const Loop& b) { return a.blocks.size() < b.blocks.size(); });
  return loops;
}

} // namespace cirlab
