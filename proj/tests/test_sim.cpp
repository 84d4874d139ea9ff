#include "doctest.h"

#include "simtforge/oracle.hpp"
#include "simtforge/pipeline.hpp"
#include "simtforge/sim.hpp"

#include "helpers.hpp"

using namespace simtforge;
using testutil::parse_text;

namespace {

PipelineConfig small_cfg(int warps, int threads) {
  PipelineConfig cfg;
  cfg.warp_count = warps;
  cfg.warp_size = threads;
  cfg.mem_words = 4096;
  return cfg;
}

SimResult lower_and_run(const Module& high, const PipelineConfig& cfg,
                        const std::vector<uint32_t>& args,
                        const std::vector<uint32_t>& mem) {
  PipelineResult r = run_pipeline(high, cfg);
  SimOptions so;
  so.uniform = &r.uniform;
  return run_simt(r.module, cfg, args, mem, so);
}

}  // namespace

TEST_CASE("hand trace: 4-lane diamond on tid<2") {
  // mask sequence 1111 / 0011 / 1100 / 1111 shows up as one split executed,
  // two join visits, depth one, and a per-lane-correct result
  Module m = testutil::load(std::string(KERNELS_DIR) + "/diamond.vir");
  PipelineConfig cfg = small_cfg(1, 4);
  SimResult res = lower_and_run(m, cfg, {0, 4}, {});
  REQUIRE(res.ok());
  CHECK(res.metrics.splits_executed == 1);
  CHECK(res.metrics.joins_executed == 2);
  CHECK(res.metrics.max_ipdom_depth == 1);
  // then-arm lanes 0,1: t*2; else lanes 2,3: t+n
  CHECK(res.memory[0] == 0);
  CHECK(res.memory[1] == 2);
  CHECK(res.memory[2] == 6);
  CHECK(res.memory[3] == 7);
  CHECK(res.invariant_violations.empty());
}

TEST_CASE("hand trace: loop with per-lane trips 0..3 restores the mask") {
  Module m = testutil::load(std::string(KERNELS_DIR) + "/while_divergent.vir");
  PipelineConfig cfg = small_cfg(1, 4);
  SimResult res = lower_and_run(m, cfg, {0}, {});
  REQUIRE(res.ok());
  // pred executes once per iteration plus the final all-exit evaluation
  CHECK(res.metrics.preds_executed == 4);
  // acc = sum 0..trips-1 with trips = tid & 3
  CHECK(res.memory[0] == 0);
  CHECK(res.memory[1] == 0);
  CHECK(res.memory[2] == 1);
  CHECK(res.memory[3] == 3);
  CHECK(res.invariant_violations.empty());
}

TEST_CASE("raw launch: wspawn populates memory with global thread ids") {
  Module m = testutil::load(std::string(FIXTURES_DIR) + "/wspawn_raw.vir");
  PipelineConfig cfg = small_cfg(8, 4);
  SimOptions so;
  so.launch = LaunchMode::Raw;
  SimResult res = run_simt(m, cfg, {}, {}, so);
  REQUIRE(res.ok());
  for (uint32_t i = 0; i < 16; ++i) CHECK(res.memory[i] == i);
  CHECK(res.invariant_violations.empty());
}

TEST_CASE("straight-line kernel has unit SIMD efficiency") {
  Module m = testutil::load(std::string(KERNELS_DIR) + "/straight_line.vir");
  PipelineConfig cfg = small_cfg(2, 8);
  ProvisionedArgs pa = provision_args(*m.kernel(), cfg);
  SimResult res = lower_and_run(m, cfg, pa.args, pa.mem_init);
  REQUIRE(res.ok());
  CHECK(res.metrics.simd_efficiency() == doctest::Approx(1.0));
}

TEST_CASE("metrics JSON is canonical: sorted keys, six-decimal floats") {
  MetricsReport m;
  m.dyn_instrs = 3;
  m.warp_size = 4;
  m.active_lane_sum = 9;
  m.per_opcode["add"] = 2;
  m.per_opcode["ret"] = 1;
  CHECK(metrics_to_json(m) ==
        "{\"barriers_hit\": 0, \"dyn_instrs\": 3, \"joins_executed\": 0, "
        "\"max_ipdom_depth\": 0, \"per_opcode\": {\"add\": 2, \"ret\": 1}, "
        "\"preds_executed\": 0, \"simd_efficiency\": 0.750000, "
        "\"splits_executed\": 0}");
}

TEST_CASE("determinism: identical runs produce identical outcomes") {
  Module m = testutil::load(std::string(KERNELS_DIR) + "/loop_break.vir");
  PipelineConfig cfg = small_cfg(2, 8);
  ProvisionedArgs pa = provision_args(*m.kernel(), cfg);
  SimResult a = lower_and_run(m, cfg, pa.args, pa.mem_init);
  SimResult b = lower_and_run(m, cfg, pa.args, pa.mem_init);
  REQUIRE(a.ok());
  REQUIRE(b.ok());
  CHECK(a.memory == b.memory);
  CHECK(a.rets == b.rets);
  CHECK(metrics_to_json(a.metrics) == metrics_to_json(b.metrics));
}

TEST_CASE("runtime errors: out-of-bounds store") {
  Module m = parse_text(
      ".stage lowered\n"
      "kernel @k() {\nentry:\n  %big = const 999999\n  %t = tid\n"
      "  store %t, %big\n  ret\n}\n");
  PipelineConfig cfg = small_cfg(1, 4);
  SimResult res = run_simt(m, cfg, {}, {}, {});
  CHECK(res.status == SimResult::Status::RuntimeError);
  CHECK(res.error.find("out of bounds") != std::string::npos);
}

TEST_CASE("runtime errors: udiv by zero traps") {
  Module m = parse_text(
      ".stage lowered\n"
      "kernel @k() {\nentry:\n  %z = const 0\n  %o = const 1\n"
      "  %q = udiv %o, %z\n  ret\n}\n");
  SimResult res = run_simt(m, small_cfg(1, 4), {}, {}, {});
  CHECK(res.status == SimResult::Status::RuntimeError);
  CHECK(res.error.find("udiv by zero") != std::string::npos);
}

TEST_CASE("runtime errors: the step limit stops runaway loops") {
  Module m = parse_text(
      ".stage lowered\n"
      "kernel @k() {\nentry:\n  br ^spin\nspin:\n  br ^spin\n}\n");
  PipelineConfig cfg = small_cfg(1, 4);
  cfg.step_limit = 1000;
  SimResult res = run_simt(m, cfg, {}, {}, {});
  CHECK(res.status == SimResult::Status::RuntimeError);
  CHECK(res.error.find("step limit") != std::string::npos);
}

TEST_CASE("join token mismatch is a runtime error") {
  Module m = parse_text(
      ".stage lowered\n"
      "kernel @k(%n: i32) {\n"
      "entry:\n"
      "  %t = tid\n"
      "  %c = icmp slt %t, %n\n"
      "  %tok = split %c\n"
      "  br %c, ^a, ^j\n"
      "a:\n"
      "  %c2 = icmp slt %t, %n\n"
      "  %tok2 = split %c2\n"
      "  br %c2, ^b, ^j\n"
      "b:\n"
      "  br ^j\n"
      "j:\n"
      "  join %tok\n"
      "  join %tok2\n"
      "  ret\n"
      "}\n");
  // joins stacked outermost-first: the outer token sits below the top
  SimResult res = run_simt(m, small_cfg(1, 4), {2}, {}, {});
  CHECK(res.status == SimResult::Status::RuntimeError);
  CHECK(res.error.find("token") != std::string::npos);
}

TEST_CASE("barrier releases when the warp quota arrives") {
  Module m = testutil::load(std::string(KERNELS_DIR) + "/barrier_exchange.vir");
  PipelineConfig cfg = small_cfg(2, 4);
  ProvisionedArgs pa = provision_args(*m.kernel(), cfg);
  SimResult res = lower_and_run(m, cfg, pa.args, pa.mem_init);
  REQUIRE(res.ok());
  CHECK(res.metrics.barriers_hit == 4);  // two barriers, two warps
}

TEST_CASE("barrier count above the launch is a runtime error") {
  Module m = parse_text(
      ".stage lowered\n"
      "kernel @k() {\nentry:\n  barrier 0, 9\n  ret\n}\n");
  SimResult res = run_simt(m, small_cfg(2, 4), {}, {}, {});
  CHECK(res.status == SimResult::Status::RuntimeError);
  CHECK(res.error.find("barrier") != std::string::npos);
}

TEST_CASE("oracle: saxpy computes per-thread results") {
  Module m = testutil::load(std::string(KERNELS_DIR) + "/saxpy.vir");
  PipelineConfig cfg = small_cfg(2, 4);
  ProvisionedArgs pa = provision_args(*m.kernel(), cfg);
  OracleResult res = run_oracle(m, cfg, pa.args, pa.mem_init);
  REQUIRE(res.ok);
  uint32_t a = pa.args[2];
  for (int i = 0; i < 8; ++i) {
    uint32_t x = pa.mem_init[i];
    uint32_t y = pa.mem_init[64 + i];
    CHECK(res.memory[64 + i] == a * x + y);
  }
}

TEST_CASE("oracle: an unsatisfiable barrier deadlocks") {
  Module m = testutil::load(std::string(FIXTURES_DIR) + "/barrier_skip.vir");
  PipelineConfig cfg = small_cfg(1, 4);
  ProvisionedArgs pa = provision_args(*m.kernel(), cfg);
  OracleResult res = run_oracle(m, cfg, pa.args, pa.mem_init);
  CHECK_FALSE(res.ok);
  CHECK(res.deadlock);
}

TEST_CASE("atomic sums agree between the two interpreters") {
  Module m = testutil::load(std::string(KERNELS_DIR) + "/atomic_sum.vir");
  PipelineConfig cfg = small_cfg(4, 8);
  ProvisionedArgs pa = provision_args(*m.kernel(), cfg);
  CompareOutcome out = compare_module(m, cfg, pa.args, pa.mem_init);
  CHECK(out.match());
}

TEST_CASE("shfl from an out-of-range lane reads zero") {
  Module m = parse_text(
      ".stage lowered\n"
      "kernel @k(%out: addr) {\n"
      "entry:\n"
      "  %t = tid\n"
      "  %big = const 99\n"
      "  %v = add %t, %big\n"
      "  %s = shfl %v, %big\n"
      "  %p = addr.add %out, %t\n"
      "  store %s, %p\n"
      "  ret\n"
      "}\n");
  SimResult res = run_simt(m, small_cfg(1, 4), {0}, {}, {});
  REQUIRE(res.ok());
  for (int i = 0; i < 4; ++i) CHECK(res.memory[i] == 0);
}

TEST_CASE("dynamic uniformity check trips on the bad annotation") {
  Module m = testutil::load(std::string(FIXTURES_DIR) + "/bad-annot.vir");
  PipelineConfig cfg = small_cfg(1, 4);
  ProvisionedArgs pa = provision_args(*m.kernel(), cfg);
  CompareOutcome out = compare_module(m, cfg, pa.args, pa.mem_init);
  CHECK(out.kind == CompareOutcome::Kind::SimError);
  CHECK(out.sim.status == SimResult::Status::UniformityViolation);
  // annotations off: the same kernel simply runs divergent and matches
  cfg.annotations = false;
  CompareOutcome ok = compare_module(m, cfg, pa.args, pa.mem_init);
  CHECK(ok.match());
}

TEST_CASE("warp intrinsics under divergent control are rejected, not guessed") {
  Module m = parse_text(
      "kernel @k(%out: addr, %n: i32) {\n"
      "entry:\n  %t = tid\n  %c = icmp slt %t, %n\n  br %c, ^a, ^j\n"
      "a:\n  %one = const 1\n  %z = const 0\n  %cc = icmp eq %z, %z\n"
      "  %v = vote.any %cc\n  br ^j\n"
      "j:\n  ret\n}\n");
  PipelineConfig cfg = small_cfg(1, 4);
  ProvisionedArgs pa = provision_args(*m.kernel(), cfg);
  CompareOutcome out = compare_module(m, cfg, pa.args, pa.mem_init);
  CHECK(out.kind == CompareOutcome::Kind::Rejected);
}
