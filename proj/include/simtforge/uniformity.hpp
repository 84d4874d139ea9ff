#pragma once

#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "simtforge/cfg.hpp"
#include "simtforge/ir.hpp"

namespace simtforge {

enum class UniState { Uniform, Divergent };

enum class BranchState { NonConditional, UniformBranch, DivergentBranch };

struct UniformityMap {
  std::unordered_map<std::string, UniState> value_state;
  std::unordered_map<std::string, BranchState> branch_state;  // by block label

  bool divergent(const std::string& v) const {
    auto it = value_state.find(v);
    return it != value_state.end() && it->second == UniState::Divergent;
  }
  BranchState branch(const std::string& label) const {
    auto it = branch_state.find(label);
    return it == branch_state.end() ? BranchState::NonConditional : it->second;
  }
};

// Alg. 1 carriers. Initialized Divergent and only lowered toward Uniform at
// the interprocedural fixed point; uniform-flagged params start Uniform.
struct FunctionSummary {
  std::vector<UniState> uarg;
  std::vector<UniState> uptr_out;  // one entry per addr-typed param
  UniState uret = UniState::Divergent;
};

using SummaryMap = std::unordered_map<std::string, FunctionSummary>;

struct ArgAnalysisResult {
  SummaryMap summaries;
  int iterations = 0;
};

// Divergence-tracker seeds only; no propagation.
UniformityMap seed_uniformity(const Function& f, const Module& m,
                              const SummaryMap& summaries);

// Fixed point of the data rule (divergent operand poisons the result, with
// vote/call results pinned to their seeds) and the sync rule (phis between a
// divergent branch and its ipdom, inclusive, are divergent). `pinned` values
// are never raised.
UniformityMap propagate_uniformity(const Function& f, const Module& m,
                                   const UniformityMap& seeds, const Cfg& cfg,
                                   const PostDomTree& pd,
                                   const std::unordered_set<std::string>& pinned = {});

// Forces each assume_uniform target Uniform and reruns propagation.
UniformityMap apply_annotations(const Function& f, const Module& m,
                                const UniformityMap& fixed_point, const Cfg& cfg,
                                const PostDomTree& pd, const SummaryMap& summaries);

// seed + propagate (+ annotations when enabled); requires single-exit f.
UniformityMap compute_uniformity(const Function& f, const Module& m,
                                 const SummaryMap& summaries, bool annotations);

// Conservative uniformity over Lowered (non-SSA) code: same seeds; a
// multiply-assigned name (a demoted phi) additionally picks up divergence
// from the control its assignments sit under. Matches the High analysis on
// demoted pipeline output. assume_uniform still pins its target.
UniformityMap compute_lowered_uniformity(const Function& f, const Module& m,
                                         const SummaryMap& summaries);

// Alg. 1: reverse post-order over the call-graph SCC condensation, all
// summaries initialized Divergent, AnalyzeFunc to a fixed point. Lowered
// modules use the lowered per-function analysis.
ArgAnalysisResult analyze_function_arguments(const Module& m, bool annotations);

std::string dump_uniformity(const Module& m, bool annotations);

}  // namespace simtforge
