#include "doctest.h"

#include <set>

#include "simtforge/cfg.hpp"
#include "simtforge/fuzz.hpp"
#include "simtforge/normalize.hpp"
#include "simtforge/pipeline.hpp"
#include "simtforge/printer.hpp"

#include "helpers.hpp"

using namespace simtforge;
using testutil::parse_text;

TEST_CASE("pass log instruction accounting is internally consistent") {
  for (auto& path : testutil::corpus_files()) {
    CAPTURE(path);
    Module m = testutil::load(path);
    PipelineConfig cfg;
    cfg.recon = true;
    PipelineResult r = run_pipeline(m, cfg);
    for (auto& e : r.log) {
      CAPTURE(e.pass);
      CHECK(e.instrs_after == e.instrs_before + e.inserted - e.removed);
    }
  }
}

TEST_CASE("diamond lowers to one static split and one static join") {
  Module m = testutil::load(std::string(KERNELS_DIR) + "/diamond.vir");
  PipelineConfig cfg;
  PipelineResult r = run_pipeline(m, cfg);
  CHECK(r.log.back().static_splits == 1);
  CHECK(r.log.back().static_joins == 1);
}

TEST_CASE("disabling annotations yields strictly more static splits") {
  Module m = testutil::load(std::string(KERNELS_DIR) + "/annotated_loop.vir");
  PipelineConfig with;
  PipelineConfig without;
  without.annotations = false;
  int s_with = run_pipeline(m, with).log.back().static_splits;
  int s_without = run_pipeline(m, without).log.back().static_splits;
  CHECK(s_without > s_with);
}

TEST_CASE("stop-after structurize emits verifiable High-stage output") {
  Module m = testutil::load(std::string(KERNELS_DIR) + "/loop_break.vir");
  PipelineConfig cfg;
  PipelineResult r = run_pipeline(m, cfg, "structurize");
  CHECK(r.module.stage == Stage::High);
  testutil::require_verified(r.module);
}

TEST_CASE("post-pipeline structure: single exit, canonical loops, reducible") {
  for (auto& path : testutil::corpus_files()) {
    CAPTURE(path);
    Module m = testutil::load(path);
    PipelineConfig cfg;
    PipelineResult r = run_pipeline(m, cfg, "demote");
    for (auto& f : r.module.functions) {
      int rets = 0;
      for (auto& b : f.blocks)
        if (b.term.op == Opcode::Ret) ++rets;
      CHECK(rets == 1);
      Cfg g = build_cfg(f);
      DomTree dom = compute_dom_tree(f, g);
      CHECK(check_reducible(f, g, dom).reducible);
      LoopForest lf = build_loop_forest(f, g, dom);
      for (auto& loop : lf.loops) {
        CHECK(loop.preheader >= 0);
        CHECK(loop.latches.size() == 1);
        CHECK(loop.exit_blocks.size() == 1);
      }
    }
  }
}

TEST_CASE("recon duplicates the shared leaf once and splits its CDG fan-in") {
  Module m = testutil::load(std::string(KERNELS_DIR) + "/cfd_like.vir");
  PipelineConfig cfg;
  cfg.recon = true;
  PipelineResult r = run_pipeline(m, cfg, "recon");
  const Function& f = r.module.functions[0];
  int copies = 0;
  for (auto& b : f.blocks)
    if (b.label == "dd" || b.label.rfind("dd.dup", 0) == 0) ++copies;
  CHECK(copies == 2);  // the original plus exactly one duplicate
  Cfg g = build_cfg(f);
  PostDomTree pd = compute_postdom_tree(f, g);
  Cdg cdg = build_cdg(f, g, pd);
  for (auto& b : f.blocks) {
    if (b.label == "dd" || b.label.rfind("dd.dup", 0) == 0) {
      int ix = g.of(b.label);
      std::set<int> ctl(cdg.controllers[ix].begin(), cdg.controllers[ix].end());
      CHECK(ctl.size() == 1);
    }
  }
}

TEST_CASE("recon skips the shape when every controlling branch is uniform") {
  Module m = testutil::load(std::string(KERNELS_DIR) + "/cfd_like.vir");
  // force uniformity by annotating every condition source
  Function& f = m.functions[0];
  std::vector<std::string> conds = {"b1", "b2", "b3"};
  for (auto& c : conds) {
    Instruction a;
    a.op = Opcode::AssumeUniform;
    a.operands = {Operand::value(c)};
    // after the defining instruction
    for (auto& b : f.blocks)
      for (size_t k = 0; k < b.body.size(); ++k)
        if (b.body[k].result == c) {
          b.body.insert(b.body.begin() + k + 1, a);
          break;
        }
  }
  PipelineConfig cfg;
  cfg.recon = true;
  PipelineResult r = run_pipeline(m, cfg, "recon");
  for (auto& b : r.module.functions[0].blocks)
    CHECK(b.label.rfind("dd.dup", 0) != 0);
}

TEST_CASE("fuzz reports are deterministic for a fixed seed") {
  PipelineConfig cfg;
  cfg.warp_count = 2;
  cfg.warp_size = 4;
  FuzzResult a = fuzz_kernels(11, 40, cfg);
  FuzzResult b = fuzz_kernels(11, 40, cfg);
  CHECK(a.report_json == b.report_json);
  CHECK(a.matches == 40);
}

TEST_CASE("fuzz with a forced InvertBranch and no repair records mismatches") {
  PipelineConfig cfg;
  cfg.warp_count = 2;
  cfg.warp_size = 4;
  FuzzOptions fo;
  fo.perturb_mode = 0;  // InvertBranch
  fo.repair = false;
  FuzzResult r = fuzz_kernels(1, 60, cfg, fo);
  CHECK(r.matches < 60);  // at least one kernel betrays the hazard
}

TEST_CASE("pipeline errors carry the failing pass name") {
  Module m = testutil::load(std::string(FIXTURES_DIR) + "/adversarial8.vir");
  PipelineConfig cfg;
  try {
    run_pipeline(m, cfg);
    FAIL("expected StructurizeError");
  } catch (const PassError& e) {
    CHECK(e.pass == "structurize");
  }
}

TEST_CASE("zicond strictly reduces dynamic instructions on the ternary kernel") {
  Module m = testutil::load(std::string(KERNELS_DIR) + "/ternary.vir");
  PipelineConfig off;
  off.warp_count = 1;
  off.warp_size = 8;
  PipelineConfig on = off;
  on.zicond = true;
  ProvisionedArgs pa = provision_args(*m.kernel(), off);
  CompareOutcome a = compare_module(m, off, pa.args, pa.mem_init);
  CompareOutcome b = compare_module(m, on, pa.args, pa.mem_init);
  REQUIRE(a.match());
  REQUIRE(b.match());
  CHECK(b.sim.metrics.dyn_instrs < a.sim.metrics.dyn_instrs);
}
