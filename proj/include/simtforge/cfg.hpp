#pragma once

#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "simtforge/ir.hpp"

namespace simtforge {

struct AnalysisError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Block-index view of a function's control flow. Successor lists preserve
// the terminator's target order; pred/succ sets are deduplicated.
struct Cfg {
  std::vector<std::string> labels;
  std::unordered_map<std::string, int> index;
  std::vector<std::vector<int>> succs;
  std::vector<std::vector<int>> preds;

  int of(const std::string& label) const {
    auto it = index.find(label);
    return it == index.end() ? -1 : it->second;
  }
  size_t size() const { return labels.size(); }
};

Cfg build_cfg(const Function& f);

// Throws AnalysisError when f contains blocks unreachable from entry;
// normalize removes those before any analysis runs.
void require_all_reachable(const Function& f, const Cfg& cfg);

struct DomTree {
  std::vector<int> idom;     // entry maps to itself
  std::vector<int> rpo;      // reverse postorder of blocks
  std::vector<int> rpo_num;  // block -> position in rpo

  bool dominates(int a, int b) const {
    while (true) {
      if (a == b) return true;
      if (b == 0 || idom[b] == b) return false;
      b = idom[b];
    }
  }
};

struct PostDomTree {
  std::vector<int> ipdom;  // -1 when the block cannot reach the exit
  int exit_block = -1;

  bool postdominates(int a, int b) const {  // a post-dominates b
    while (true) {
      if (a == b) return true;
      if (b == exit_block || ipdom[b] < 0) return false;
      b = ipdom[b];
    }
  }
};

struct Loop {
  int header = -1;
  std::vector<int> latches;                  // sources of back edges to header
  std::vector<int> body;                     // includes header, sorted
  int preheader = -1;                        // -1 when absent
  std::vector<std::pair<int, int>> exit_edges;  // (in-loop block, outside target)
  std::vector<int> exit_blocks;              // distinct outside targets
  int parent = -1;                           // index of enclosing loop, -1 at top

  bool contains(int b) const {
    for (int x : body)
      if (x == b) return true;
    return false;
  }
};

struct LoopForest {
  std::vector<Loop> loops;  // ordered by header RPO number

  const Loop* loop_with_header(int b) const {
    for (auto& l : loops)
      if (l.header == b) return &l;
    return nullptr;
  }
  // Innermost loop containing b, or nullptr.
  const Loop* innermost(int b) const {
    const Loop* best = nullptr;
    for (auto& l : loops)
      if (l.contains(b) && (!best || l.body.size() < best->body.size())) best = &l;
    return best;
  }
  bool is_latch(int b) const {
    for (auto& l : loops)
      for (int x : l.latches)
        if (x == b) return true;
    return false;
  }
};

struct Cdg {
  // dependents[a] = blocks control-dependent on a; controllers is the reverse.
  std::vector<std::vector<int>> dependents;
  std::vector<std::vector<int>> controllers;

  bool is_leaf(int b) const { return dependents[b].empty(); }
};

struct Reducibility {
  bool reducible = true;
  std::vector<std::pair<int, int>> witness;  // offending retreating edges
};

DomTree compute_dom_tree(const Function& f, const Cfg& cfg);

// Requires a single exit block (exactly one ret); throws AnalysisError
// ("MultipleExits") otherwise.
PostDomTree compute_postdom_tree(const Function& f, const Cfg& cfg);

LoopForest build_loop_forest(const Function& f, const Cfg& cfg, const DomTree& dom);

// Reducible iff removing all back edges (target dominates source) leaves an
// acyclic graph. The result is DFS-order independent; `order_seed` permutes
// successor visitation for the property test.
Reducibility check_reducible(const Function& f, const Cfg& cfg, const DomTree& dom,
                             uint64_t order_seed = 0);

Cdg build_cdg(const Function& f, const Cfg& cfg, const PostDomTree& pd);

// Transitive CDG ancestors (controllers closure) of block b.
std::vector<int> cdg_ancestors(const Cdg& cdg, int b);

// Blocks reachable from b (excluding b unless on a cycle through b).
std::vector<bool> reachable_from(const Cfg& cfg, int b);
// Blocks that can reach target.
std::vector<bool> reaches(const Cfg& cfg, int target);

// Deterministic text dumps (sorted by block label) for golden tests.
std::string dump_dom(const Function& f);
std::string dump_postdom(const Function& f);
std::string dump_loops(const Function& f);
std::string dump_cdg(const Function& f);

}  // namespace simtforge
