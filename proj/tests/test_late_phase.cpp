#include "doctest.h"

#include "simtforge/diverge.hpp"
#include "simtforge/late_phase.hpp"
#include "simtforge/oracle.hpp"
#include "simtforge/pipeline.hpp"
#include "simtforge/printer.hpp"
#include "simtforge/verifier.hpp"

#include "helpers.hpp"

using namespace simtforge;
using testutil::parse_text;

namespace {

PipelineConfig small_cfg() {
  PipelineConfig cfg;
  cfg.warp_count = 2;
  cfg.warp_size = 4;
  cfg.mem_words = 4096;
  return cfg;
}

struct Lowered {
  PipelineConfig cfg;
  Module high;
  Module low;
  ProvisionedArgs pa;
  OracleResult oracle;
};

Lowered lower_kernel(const std::string& path, bool zicond = false) {
  Lowered r;
  r.cfg = small_cfg();
  r.cfg.zicond = zicond;
  r.high = testutil::load(path);
  r.pa = provision_args(*r.high.kernel(), r.cfg);
  r.oracle = run_oracle(r.high, r.cfg, r.pa.args, r.pa.mem_init);
  REQUIRE(r.oracle.ok);
  PipelineResult p = run_pipeline(r.high, r.cfg);
  r.low = p.module;
  return r;
}

bool matches_oracle(const Lowered& l, const Module& candidate) {
  SimResult sim = run_simt(candidate, l.cfg, l.pa.args, l.pa.mem_init, {});
  if (!sim.ok()) return false;
  return diff_outcomes(sim.memory, sim.rets, l.oracle.memory, l.oracle.rets).match;
}

}  // namespace

TEST_CASE("InvertBranch mis-executes lanes; repair restores the differential") {
  Lowered l = lower_kernel(std::string(KERNELS_DIR) + "/diamond.vir");
  Module perturbed = l.low;
  PerturbResult pr = perturb(perturbed.functions[0], PerturbMode::InvertBranch, 0);
  REQUIRE(pr.applied);
  CHECK_FALSE(matches_oracle(l, perturbed));  // the hazard is real

  Module repaired = perturbed;
  repair_module(repaired);
  CHECK(verify_module(repaired).empty());
  CHECK(matches_oracle(l, repaired));
  // the spec's (a) case: the negate flag flips
  bool has_neg = false;
  for_each_instruction(repaired.functions[0], [&](const Instruction& i) {
    if (i.op == Opcode::Split && i.negate) has_neg = true;
  });
  CHECK(has_neg);
}

TEST_CASE("RematerializePredicate breaks split adjacency; repair re-unifies") {
  Lowered l = lower_kernel(std::string(KERNELS_DIR) + "/diamond.vir");
  Module perturbed = l.low;
  PerturbResult pr =
      perturb(perturbed.functions[0], PerturbMode::RematerializePredicate, 1);
  REQUIRE(pr.applied);
  bool adjacency_flagged = false;
  for (auto& v : verify_module(perturbed))
    if (v.kind == ViolationKind::SplitNotAdjacent) adjacency_flagged = true;
  CHECK(adjacency_flagged);

  Module repaired = perturbed;
  repair_module(repaired);
  CHECK(verify_module(repaired).empty());
  CHECK(matches_oracle(l, repaired));
  // split and branch read the same value again, back to back
  for (auto& b : repaired.functions[0].blocks) {
    for (size_t k = 0; k < b.body.size(); ++k)
      if (b.body[k].op == Opcode::Split) {
        CHECK(k + 1 == b.body.size());
        REQUIRE(b.term.op == Opcode::CondBr);
        CHECK(b.body[k].operands[0].name == b.term.operands[0].name);
      }
  }
}

TEST_CASE("ExpandSelect leaves an uninstrumented divergent branch; repair splits it") {
  Lowered l = lower_kernel(std::string(KERNELS_DIR) + "/ternary.vir", /*zicond=*/true);
  Module perturbed = l.low;
  PerturbResult pr = perturb(perturbed.functions[0], PerturbMode::ExpandSelect, 0);
  REQUIRE(pr.applied);

  // the static walk reports the gap
  ArgAnalysisResult ar = analyze_function_arguments(perturbed, true);
  UniformityMap u =
      compute_lowered_uniformity(perturbed.functions[0], perturbed, ar.summaries);
  NestednessReport rep = check_well_nested(perturbed.functions[0], &u);
  CHECK_FALSE(rep.ok);

  Module repaired = perturbed;
  repair_module(repaired);
  CHECK(verify_module(repaired).empty());
  UniformityMap u2 =
      compute_lowered_uniformity(repaired.functions[0], repaired, ar.summaries);
  CHECK(check_well_nested(repaired.functions[0], &u2).ok);
  CHECK(matches_oracle(l, repaired));
}

TEST_CASE("perturb reports no applicable site as data") {
  Module m = parse_text(".stage lowered\nkernel @k() {\nentry:\n  ret\n}\n");
  for (auto mode : {PerturbMode::InvertBranch, PerturbMode::RematerializePredicate,
                    PerturbMode::ExpandSelect}) {
    Module c = m;
    PerturbResult r = perturb(c.functions[0], mode, 0);
    CHECK_FALSE(r.applied);
  }
}

TEST_CASE("repair is the identity on clean pipeline output") {
  for (auto& path : testutil::corpus_files()) {
    CAPTURE(path);
    Module m = testutil::load(path);
    PipelineConfig cfg = small_cfg();
    PipelineResult p = run_pipeline(m, cfg);  // full pipeline ends in repair
    std::string before = print_module(p.module);
    Module again = p.module;
    repair_module(again);
    CHECK(print_module(again) == before);
  }
}

TEST_CASE("repair is idempotent after fixing a perturbation") {
  Lowered l = lower_kernel(std::string(KERNELS_DIR) + "/diamond.vir");
  Module m = l.low;
  perturb(m.functions[0], PerturbMode::InvertBranch, 0);
  repair_module(m);
  std::string once = print_module(m);
  repair_module(m);
  CHECK(print_module(m) == once);
}

TEST_CASE("perturbation is deterministic in the seed") {
  Lowered l = lower_kernel(std::string(KERNELS_DIR) + "/nested_if.vir");
  Module a = l.low, b = l.low;
  perturb(a.functions[0], PerturbMode::InvertBranch, 7);
  perturb(b.functions[0], PerturbMode::InvertBranch, 7);
  CHECK(print_module(a) == print_module(b));
}

TEST_CASE("modes x seeds 0..9: repair restores every corpus kernel") {
  PipelineConfig cfg = small_cfg();
  for (auto& path : testutil::corpus_files()) {
    Module high = testutil::load(path);
    ProvisionedArgs pa = provision_args(*high.kernel(), cfg);
    for (int mode = 0; mode < 3; ++mode) {
      for (uint64_t seed = 0; seed < 10; seed += 3) {
        CAPTURE(path);
        CAPTURE(mode);
        CAPTURE(seed);
        CompareOptions co;
        co.perturb_mode = mode;
        co.perturb_seed = seed;
        co.repair = true;
        CompareOutcome out = compare_module(high, cfg, pa.args, pa.mem_init, co);
        CHECK(out.match());
        CHECK(out.sim.invariant_violations.empty());
      }
    }
  }
}
