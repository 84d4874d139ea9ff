#pragma once

#include "simtforge/config.hpp"
#include "simtforge/ir.hpp"
#include "simtforge/transform.hpp"
#include "simtforge/uniformity.hpp"

namespace simtforge {

// With zicond=false every select becomes a branch diamond with a phi join;
// divergent selects thus become divergent diamonds that Alg. 2 instruments
// later. With zicond=true selects stay put and lower to cmov at demotion.
// Statically-constant conditions fold in either mode.
PassStats normalize_selects(Function& f, const UniformityMap& u,
                            const PipelineConfig& cfg);

// Single-exit canonicalization, unreachable-block removal, and merging of
// trivial single-pred/single-succ pairs (loop headers excluded).
PassStats simplify_cfg(Function& f);

// Every loop gains a dedicated preheader, a unique latch ending in
// `br %live, ^header, ^exit`, and a dedicated single exit block. Early exits
// set a per-iteration continue predicate and funnel through the latch.
PassStats canonicalize_loops(Function& f);

// Node splitting until check_reducible passes; throws StructurizeError when
// the 64-block clone budget is exhausted.
PassStats structurize(Function& f);

}  // namespace simtforge
