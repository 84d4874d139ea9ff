#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "simtforge/config.hpp"
#include "simtforge/ir.hpp"

namespace simtforge {

// Reference executor: every thread runs the High-stage program on its own,
// with barrier-phase scheduling, atomics in ascending global-tid order per
// phase, and per-warp rendezvous for vote/shfl. Ground truth for every
// differential test; shares nothing with the lockstep simulator but the IR.
struct OracleResult {
  bool ok = false;
  bool deadlock = false;
  std::string error;
  std::vector<uint32_t> memory;
  std::vector<uint32_t> rets;  // one per thread; 0 for void returns
  uint64_t steps = 0;
};

OracleResult run_oracle(const Module& m, const PipelineConfig& cfg,
                        const std::vector<uint32_t>& args,
                        const std::vector<uint32_t>& mem_init);

struct OutcomeDiff {
  bool match = true;
  std::string report;  // first 16 differing words/threads
};

// Bit-exact comparison of (memory, rets) pairs.
OutcomeDiff diff_outcomes(const std::vector<uint32_t>& mem_a,
                          const std::vector<uint32_t>& rets_a,
                          const std::vector<uint32_t>& mem_b,
                          const std::vector<uint32_t>& rets_b);

}  // namespace simtforge
