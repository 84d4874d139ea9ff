#pragma once

#include <optional>
#include <string>
#include <vector>

#include "simtforge/config.hpp"
#include "simtforge/ir.hpp"
#include "simtforge/oracle.hpp"
#include "simtforge/sim.hpp"
#include "simtforge/transform.hpp"
#include "simtforge/uniformity.hpp"

namespace simtforge {

struct PassLogEntry {
  std::string pass;
  int blocks = 0;
  int instrs_before = 0;
  int instrs_after = 0;
  int inserted = 0;
  int removed = 0;
  int static_splits = 0;
  int static_joins = 0;
  int static_preds = 0;
};

struct PipelineResult {
  Module module;
  std::vector<PassLogEntry> log;
  UniformInfo uniform;  // statically-Uniform names per function, post-analysis
};

// simplify -> selects -> loops -> structurize -> [recon] -> uniformity +
// classify -> transform_loop -> transform_branch -> demote -> repair.
// stop_after truncates after the named pass; pass errors raise PassError.
PipelineResult run_pipeline(const Module& input, const PipelineConfig& cfg,
                            const std::string& stop_after = "");

std::string pass_log_json(const std::vector<PassLogEntry>& log);

// Deterministic arguments for corpus/fuzz kernels: addr params get a buffer
// of max(64, threads) words with a position-seeded ramp; i32 params draw
// from a fixed table with the thread count first.
struct ProvisionedArgs {
  std::vector<uint32_t> args;
  std::vector<uint32_t> mem_init;
};
ProvisionedArgs provision_args(const Function& kernel, const PipelineConfig& cfg);

struct CompareOutcome {
  enum class Kind { Match, Mismatch, Rejected, OracleError, SimError, VerifyError };
  Kind kind = Kind::Match;
  std::string detail;
  OracleResult oracle;
  SimResult sim;

  bool match() const { return kind == Kind::Match; }
};

struct CompareOptions {
  bool repair = true;                       // run the safety net
  std::optional<int> perturb_mode;          // inject a hazard before repair
  uint64_t perturb_seed = 0;
};

// Lowers the High module, runs both interpreters on identical inputs, and
// compares final memory and per-thread returns bit-exactly.
CompareOutcome compare_module(const Module& high, const PipelineConfig& cfg,
                              const std::vector<uint32_t>& args,
                              const std::vector<uint32_t>& mem_init,
                              const CompareOptions& opts = {});

// Static pre-check: warp intrinsics must sit under uniform control so the
// scalar oracle can define their cross-lane semantics. Returns a reason when
// the kernel is rejected from differential testing.
std::optional<std::string> warp_intrinsic_precheck(const Module& m, bool annotations);

}  // namespace simtforge
