#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace simtforge {

// Mirrors the evaluation configuration: one core, 16 warps of 32 threads by
// default. zicond keeps selects branchless (lowered to cmov); recon enables
// the CFG reconstruction pass; annotations honors assume_uniform.
struct PipelineConfig {
  bool zicond = false;
  bool recon = false;
  bool annotations = true;
  int warp_size = 32;
  int warp_count = 16;
  uint32_t mem_words = 65536;
  uint64_t step_limit = 10000000;

  int total_threads() const { return warp_size * warp_count; }

  void validate() const {
    if (warp_size < 1 || warp_size > 64)
      throw std::invalid_argument("warp-size must be in [1, 64]");
    if (warp_count < 1) throw std::invalid_argument("warp-count must be positive");
    if (mem_words == 0) throw std::invalid_argument("mem-words must be positive");
  }
};

}  // namespace simtforge
