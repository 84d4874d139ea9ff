#pragma once

#include <string>

#include "simtforge/ir.hpp"
#include "simtforge/transform.hpp"
#include "simtforge/uniformity.hpp"

namespace simtforge {

enum class PerturbMode { InvertBranch, RematerializePredicate, ExpandSelect };

struct PerturbResult {
  bool applied = false;  // false: NoApplicableSite (data, not failure)
  std::string site;
  PassStats stats;
};

// Seeded, deterministic injection of one back-end-shaped hazard: a branch
// inversion that leaves the split behind, a predicate rematerialized between
// split and branch, or a cmov expanded to an uninstrumented diamond.
PerturbResult perturb(Function& f, PerturbMode mode, uint64_t seed);

// The last pass: (a) realigns split negate flags with inverted branches,
// (b) re-unifies provably-equal split/branch predicates back-to-back,
// (c) synthesizes split/join around divergent branches that lost theirs.
PassStats repair_divergence(Function& f, const UniformityMap& u);

// Repair over a whole module using the lowered analysis.
PassStats repair_module(Module& m);

}  // namespace simtforge
