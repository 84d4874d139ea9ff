#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "simtforge/config.hpp"
#include "simtforge/ir.hpp"

namespace simtforge {

enum class LaunchMode { Kernel, Raw };

// Values proven Uniform by the static analysis, per function. The simulator
// asserts lane-equality at every definition of these names; unsound
// annotations are caught here instead of being trusted.
struct UniformInfo {
  std::unordered_map<std::string, std::unordered_set<std::string>> values;
};

struct MetricsReport {
  uint64_t dyn_instrs = 0;
  std::map<std::string, uint64_t> per_opcode;
  uint64_t splits_executed = 0;
  uint64_t joins_executed = 0;
  uint64_t preds_executed = 0;
  uint64_t max_ipdom_depth = 0;
  uint64_t barriers_hit = 0;
  uint64_t active_lane_sum = 0;  // feeds simd_efficiency
  int warp_size = 0;

  double simd_efficiency() const {
    if (dyn_instrs == 0 || warp_size == 0) return 0.0;
    return static_cast<double>(active_lane_sum) /
           (static_cast<double>(warp_size) * static_cast<double>(dyn_instrs));
  }
};

// Canonical JSON: keys sorted, floats with 6 decimals.
std::string metrics_to_json(const MetricsReport& m);

struct SimOptions {
  LaunchMode launch = LaunchMode::Kernel;
  const UniformInfo* uniform = nullptr;
  bool check_invariants = true;
};

struct SimResult {
  enum class Status { Ok, RuntimeError, UniformityViolation };
  Status status = Status::Ok;
  std::string error;
  std::vector<uint32_t> memory;
  std::vector<uint32_t> rets;  // per global thread id; 0 when not written
  MetricsReport metrics;
  // Divergence-discipline violations observed while running (collected as
  // data; empty on every well-formed pipeline output).
  std::vector<std::string> invariant_violations;

  bool ok() const { return status == Status::Ok; }
};

SimResult run_simt(const Module& m, const PipelineConfig& cfg,
                   const std::vector<uint32_t>& args,
                   const std::vector<uint32_t>& mem_init, const SimOptions& opts);

}  // namespace simtforge
