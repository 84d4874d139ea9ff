#pragma once

#include <optional>
#include <string>

#include "simtforge/config.hpp"
#include "simtforge/ir.hpp"
#include "simtforge/pipeline.hpp"

namespace simtforge {

// Structured random High-stage kernels: if/if-else/while nests to depth 3,
// mixed uniform and tid-dependent conditions, masked loads from a read-only
// buffer, stores at the thread's own slot, commutative atomics, an optional
// top-level barrier, bounded per-lane trip counts.
Module generate_fuzz_kernel(uint64_t seed, int index, const PipelineConfig& cfg);

struct FuzzOptions {
  std::optional<int> perturb_mode;  // late-phase hazard injected per kernel
  bool repair = true;
};

struct FuzzResult {
  int count = 0;
  int matches = 0;
  int mismatches = 0;
  int errors = 0;
  std::string report_json;  // deterministic, sorted keys
};

FuzzResult fuzz_kernels(uint64_t seed, int count, const PipelineConfig& cfg,
                        const FuzzOptions& opts = {});

}  // namespace simtforge
