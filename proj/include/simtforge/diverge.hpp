#pragma once

#include <utility>
#include <vector>

#include "simtforge/cfg.hpp"
#include "simtforge/config.hpp"
#include "simtforge/ir.hpp"
#include "simtforge/transform.hpp"
#include "simtforge/uniformity.hpp"

namespace simtforge {

struct DivergencePlan {
  std::vector<std::pair<int, int>> d_branch;  // (branch block, ipdom block)
  std::vector<std::pair<int, int>> d_loop;    // (latch block, loop exit block)
};

// Skips uniform or unconditional terminators; latch branches go to d_branch
// when their ipdom stays inside the loop and to d_loop otherwise; other
// branches join d_branch only when the ipdom is reachable.
DivergencePlan classify_branches(const Function& f, const UniformityMap& u,
                                 const Cfg& cfg, const PostDomTree& pd,
                                 const LoopForest& lf);

// D_loop: activemask in the preheader, pred at the latch, tmc at the exit.
PassStats transform_loop(Function& f, const DivergencePlan& plan, const Cfg& cfg,
                         const LoopForest& lf);

// D_branch: split immediately before the branch, join(s) at the top of the
// ipdom, innermost-first when several regions share one ipdom.
PassStats transform_branch(Function& f, const DivergencePlan& plan, const Cfg& cfg,
                           const DomTree& dom);

// Parallel-copy phi demotion, leftover select lowering to cmov, and
// annotation stripping when annotations are disabled. The caller flips the
// module stage to Lowered once every function is demoted.
PassStats demote_phis(Function& f, const PipelineConfig& cfg);

// Static well-nestedness: along every forward-CFG path, split/join tokens
// form a matched nesting; with a uniformity map it also reports divergent
// conditional branches lacking an adjacent split.
struct NestednessReport {
  bool ok = true;
  std::vector<std::string> problems;
};
NestednessReport check_well_nested(const Function& f, const UniformityMap* u);

}  // namespace simtforge
