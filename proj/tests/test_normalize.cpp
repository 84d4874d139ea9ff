#include "doctest.h"

#include "simtforge/cfg.hpp"
#include "simtforge/normalize.hpp"
#include "simtforge/oracle.hpp"
#include "simtforge/pipeline.hpp"
#include "simtforge/printer.hpp"
#include "simtforge/uniformity.hpp"

#include "helpers.hpp"

using namespace simtforge;
using testutil::parse_text;

namespace {

// Oracle differential: a pass preserves per-thread semantics.
void check_semantics_preserved(const Module& before, const Module& after,
                               const char* what) {
  PipelineConfig cfg;
  cfg.warp_count = 2;
  cfg.warp_size = 4;
  ProvisionedArgs pa = provision_args(*before.kernel(), cfg);
  OracleResult a = run_oracle(before, cfg, pa.args, pa.mem_init);
  OracleResult b = run_oracle(after, cfg, pa.args, pa.mem_init);
  REQUIRE_MESSAGE(a.ok, what << ": " << a.error);
  REQUIRE_MESSAGE(b.ok, what << ": " << b.error);
  OutcomeDiff d = diff_outcomes(a.memory, a.rets, b.memory, b.rets);
  CHECK_MESSAGE(d.match, what << ":\n" << d.report);
}

UniformityMap uniformity_of(const Module& m) {
  ArgAnalysisResult ar = analyze_function_arguments(m, true);
  return compute_uniformity(m.functions[0], m, ar.summaries, true);
}

}  // namespace

TEST_CASE("select rewrite produces a three-block diamond with a phi join") {
  Module m = testutil::load(std::string(KERNELS_DIR) + "/ternary.vir");
  Module before = m;
  for (auto& f : m.functions) simplify_cfg(f);
  size_t blocks_before = m.functions[0].blocks.size();
  UniformityMap u = uniformity_of(m);
  PipelineConfig cfg;
  PassStats s = normalize_selects(m.functions[0], u, cfg);
  CHECK(m.functions[0].blocks.size() == blocks_before + 3);
  CHECK(s.removed == 1);
  bool has_phi = false, has_select = false;
  for_each_instruction(m.functions[0], [&](const Instruction& i) {
    if (i.op == Opcode::Phi) has_phi = true;
    if (i.op == Opcode::Select) has_select = true;
  });
  CHECK(has_phi);
  CHECK_FALSE(has_select);
  testutil::require_verified(m);
  check_semantics_preserved(before, m, "selects");
}

TEST_CASE("zicond leaves selects untouched at the High stage") {
  Module m = testutil::load(std::string(KERNELS_DIR) + "/ternary.vir");
  UniformityMap u = uniformity_of(m);
  PipelineConfig cfg;
  cfg.zicond = true;
  size_t blocks_before = m.functions[0].blocks.size();
  normalize_selects(m.functions[0], u, cfg);
  CHECK(m.functions[0].blocks.size() == blocks_before);
  bool has_select = false;
  for_each_instruction(m.functions[0], [&](const Instruction& i) {
    if (i.op == Opcode::Select) has_select = true;
  });
  CHECK(has_select);
}

TEST_CASE("statically-true select condition folds without a diamond") {
  Module m = testutil::load(std::string(KERNELS_DIR) + "/select_fold.vir");
  Module before = m;
  UniformityMap u = uniformity_of(m);
  PipelineConfig cfg;
  size_t blocks_before = m.functions[0].blocks.size();
  PassStats s = normalize_selects(m.functions[0], u, cfg);
  CHECK(m.functions[0].blocks.size() == blocks_before);
  CHECK(s.removed == 1);
  CHECK(s.inserted == 0);
  check_semantics_preserved(before, m, "select fold");
}

TEST_CASE("two returns merge into one exit block with a phi") {
  Module m = testutil::load(std::string(KERNELS_DIR) + "/early_ret_diamond.vir");
  Module before = m;
  PassStats s = simplify_cfg(m.functions[0]);
  (void)s;
  int rets = 0;
  bool exit_phi = false;
  for (auto& b : m.functions[0].blocks)
    if (b.term.op == Opcode::Ret) {
      ++rets;
      if (!b.phis.empty()) exit_phi = true;
    }
  CHECK(rets == 1);
  CHECK(exit_phi);
  testutil::require_verified(m);
  check_semantics_preserved(before, m, "merge returns");
}

TEST_CASE("dead blocks vanish and the module still verifies") {
  Module m = testutil::load(std::string(FIXTURES_DIR) + "/dead_block.vir");
  simplify_cfg(m.functions[0]);
  CHECK(m.functions[0].blocks.size() == 1);
  testutil::require_verified(m);
}

TEST_CASE("simplify is idempotent") {
  for (auto& path : testutil::corpus_files()) {
    CAPTURE(path);
    Module m = testutil::load(path);
    for (auto& f : m.functions) simplify_cfg(f);
    std::string once = print_module(m);
    for (auto& f : m.functions) simplify_cfg(f);
    CHECK(print_module(m) == once);
  }
}

TEST_CASE("loop canonicalization: preheader, unique latch, dedicated exit") {
  Module m = testutil::load(std::string(KERNELS_DIR) + "/while_divergent.vir");
  Module before = m;
  Function& f = m.functions[0];
  simplify_cfg(f);
  canonicalize_loops(f);
  testutil::require_verified(m);

  Cfg cfg = build_cfg(f);
  DomTree dom = compute_dom_tree(f, cfg);
  LoopForest lf = build_loop_forest(f, cfg, dom);
  REQUIRE(lf.loops.size() == 1);
  const Loop& loop = lf.loops[0];
  CHECK(loop.preheader >= 0);
  REQUIRE(loop.latches.size() == 1);
  int latch = loop.latches[0];
  CHECK(f.blocks[latch].term.op == Opcode::CondBr);
  CHECK(cfg.of(f.blocks[latch].term.operands[1].name) == loop.header);
  REQUIRE(loop.exit_edges.size() == 1);
  CHECK(loop.exit_edges[0].first == latch);
  int exit_block = loop.exit_edges[0].second;
  CHECK(cfg.preds[exit_block].size() == 1);
  check_semantics_preserved(before, m, "canonicalize");
}

TEST_CASE("break paths funnel through the latch with a live predicate") {
  Module m = testutil::load(std::string(KERNELS_DIR) + "/loop_break.vir");
  Module before = m;
  Function& f = m.functions[0];
  simplify_cfg(f);
  canonicalize_loops(f);
  testutil::require_verified(m);
  Cfg cfg = build_cfg(f);
  DomTree dom = compute_dom_tree(f, cfg);
  LoopForest lf = build_loop_forest(f, cfg, dom);
  REQUIRE(lf.loops.size() == 1);
  CHECK(lf.loops[0].exit_edges.size() == 1);  // exactly one loop-exit edge
  check_semantics_preserved(before, m, "break funnel");
}

TEST_CASE("canonical loops are left unchanged (idempotence)") {
  for (auto& path : testutil::corpus_files()) {
    CAPTURE(path);
    Module m = testutil::load(path);
    for (auto& f : m.functions) {
      simplify_cfg(f);
      canonicalize_loops(f);
    }
    std::string once = print_module(m);
    for (auto& f : m.functions) canonicalize_loops(f);
    CHECK(print_module(m) == once);
  }
}

TEST_CASE("structurize is the identity on reducible inputs") {
  Module m = testutil::load(std::string(KERNELS_DIR) + "/nested_loops.vir");
  for (auto& f : m.functions) {
    simplify_cfg(f);
    canonicalize_loops(f);
  }
  std::string before = print_module(m);
  for (auto& f : m.functions) {
    PassStats s = structurize(f);
    CHECK(s.inserted == 0);
  }
  CHECK(print_module(m) == before);
}

TEST_CASE("two-entry cycle: one clone, reducible afterwards, semantics kept") {
  Module m = testutil::load(std::string(KERNELS_DIR) + "/irreducible_two_entry.vir");
  Module before = m;
  Function& f = m.functions[0];
  simplify_cfg(f);
  size_t blocks_before = f.blocks.size();
  structurize(f);
  CHECK(f.blocks.size() == blocks_before + 1);  // exactly one cloned block
  Cfg cfg = build_cfg(f);
  DomTree dom = compute_dom_tree(f, cfg);
  CHECK(check_reducible(f, cfg, dom).reducible);
  testutil::require_verified(m);
  check_semantics_preserved(before, m, "structurize");
}

TEST_CASE("adversarial mesh exhausts the clone budget") {
  Module m = testutil::load(std::string(FIXTURES_DIR) + "/adversarial8.vir");
  Function& f = m.functions[0];
  simplify_cfg(f);
  CHECK_THROWS_AS(structurize(f), StructurizeError);
}

TEST_CASE("every normalize pass preserves oracle semantics on the corpus") {
  PipelineConfig cfg;
  cfg.warp_count = 2;
  cfg.warp_size = 4;
  for (auto& path : testutil::corpus_files()) {
    CAPTURE(path);
    Module m = testutil::load(path);
    if (m.function("adversarial")) continue;
    Module original = m;
    ProvisionedArgs pa = provision_args(*m.kernel(), cfg);
    OracleResult base = run_oracle(original, cfg, pa.args, pa.mem_init);
    REQUIRE(base.ok);

    auto check_stage = [&](const char* what) {
      OracleResult now = run_oracle(m, cfg, pa.args, pa.mem_init);
      REQUIRE_MESSAGE(now.ok, path << " " << what << ": " << now.error);
      OutcomeDiff d = diff_outcomes(base.memory, base.rets, now.memory, now.rets);
      CHECK_MESSAGE(d.match, path << " " << what << ":\n" << d.report);
    };

    for (auto& f : m.functions) simplify_cfg(f);
    check_stage("simplify");
    {
      ArgAnalysisResult ar = analyze_function_arguments(m, true);
      for (auto& f : m.functions) {
        UniformityMap u = compute_uniformity(f, m, ar.summaries, true);
        normalize_selects(f, u, cfg);
      }
    }
    check_stage("selects");
    for (auto& f : m.functions) canonicalize_loops(f);
    check_stage("loops");
    for (auto& f : m.functions) structurize(f);
    check_stage("structurize");
    testutil::require_verified(m);
  }
}
