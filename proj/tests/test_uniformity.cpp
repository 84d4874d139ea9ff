#include "doctest.h"

#include "simtforge/normalize.hpp"
#include "simtforge/uniformity.hpp"

#include "helpers.hpp"

using namespace simtforge;
using testutil::parse_text;

namespace {

UniformityMap analyze(const Module& m, bool annotations = true) {
  ArgAnalysisResult ar = analyze_function_arguments(m, annotations);
  return compute_uniformity(m.functions[0], m, ar.summaries, annotations);
}

}  // namespace

TEST_CASE("divergence tracker seeds") {
  Module m = parse_text(
      "kernel @k(%p: addr, %u: i32 uniform, %d: i32) {\n"
      "entry:\n"
      "  %t = tid\n"
      "  %c = const 5\n"
      "  %nt = ntid\n"
      "  %w = wid\n"
      "  %o = atomic_add %p, %c\n"
      "  %l = load %p\n"
      "  %z = const 0\n"
      "  %cc = icmp eq %z, %z\n"
      "  %v = vote.any %cc\n"
      "  %sh = shfl %t, %z\n"
      "  ret\n"
      "}\n");
  SummaryMap none;
  UniformityMap u = seed_uniformity(m.functions[0], m, none);
  CHECK(u.divergent("t"));        // thread id
  CHECK_FALSE(u.divergent("c"));  // constant
  CHECK_FALSE(u.divergent("nt"));
  CHECK_FALSE(u.divergent("w"));  // warp-level CSR
  CHECK(u.divergent("o"));        // atomic result
  CHECK(u.divergent("l"));        // load from shared global memory
  CHECK(u.divergent("sh"));       // per-lane shuffle source
  CHECK_FALSE(u.divergent("v"));  // vote broadcast
  CHECK(u.divergent("d"));        // unflagged param
  CHECK_FALSE(u.divergent("u"));  // uniform-flagged param
}

TEST_CASE("data rule: divergent operand poisons the result") {
  Module m = parse_text(
      "kernel @k() {\nentry:\n  %a = tid\n  %one = const 1\n  %b = add %a, %one\n  ret\n}\n");
  UniformityMap u = analyze(m);
  CHECK(u.divergent("b"));
}

TEST_CASE("sync rule: phi at a divergent join is divergent even with uniform arms") {
  Module m = parse_text(
      "kernel @k(%n: i32) {\n"
      "entry:\n  %t = tid\n  %c = icmp slt %t, %n\n  br %c, ^a, ^b\n"
      "a:\n  %x = const 1\n  br ^j\n"
      "b:\n  %y = const 2\n  br ^j\n"
      "j:\n  %p = phi [%x, ^a], [%y, ^b]\n  ret\n}\n");
  UniformityMap u = analyze(m);
  CHECK(u.divergent("p"));
  CHECK(u.branch("entry") == BranchState::DivergentBranch);
}

TEST_CASE("uniform-branch phi with uniform incomings stays uniform") {
  Module m = parse_text(
      "kernel @k(%n: i32 uniform) {\n"
      "entry:\n  %z = const 0\n  %c = icmp slt %z, %n\n  br %c, ^a, ^b\n"
      "a:\n  %x = const 1\n  br ^j\n"
      "b:\n  %y = const 2\n  br ^j\n"
      "j:\n  %p = phi [%x, ^a], [%y, ^b]\n  ret\n}\n");
  UniformityMap u = analyze(m);
  CHECK_FALSE(u.divergent("p"));
  CHECK(u.branch("entry") == BranchState::UniformBranch);
}

TEST_CASE("propagation is idempotent at its fixed point") {
  for (auto& path : testutil::corpus_files()) {
    Module m = testutil::load(path);
    // the analyses run on single-exit functions, as in the pipeline
    for (auto& f : m.functions) simplify_cfg(f);
    ArgAnalysisResult ar = analyze_function_arguments(m, true);
    for (auto& f : m.functions) {
      CAPTURE(path);
      Cfg cfg = build_cfg(f);
      PostDomTree pd = compute_postdom_tree(f, cfg);
      UniformityMap seeds = seed_uniformity(f, m, ar.summaries);
      UniformityMap once = propagate_uniformity(f, m, seeds, cfg, pd);
      UniformityMap twice = propagate_uniformity(f, m, once, cfg, pd);
      CHECK(once.value_state == twice.value_state);
    }
  }
}

TEST_CASE("annotation forces uniformity and propagation reruns") {
  Module m = parse_text(
      "kernel @k(%out: addr, %n: i32) {\n"
      "entry:\n"
      "  assume_uniform %n\n"
      "  %z = const 0\n"
      "  %c = icmp slt %z, %n\n"
      "  br %c, ^a, ^b\n"
      "a:\n  br ^j\n"
      "b:\n  br ^j\n"
      "j:\n  ret\n}\n");
  UniformityMap with = analyze(m, true);
  CHECK_FALSE(with.divergent("n"));
  CHECK(with.branch("entry") == BranchState::UniformBranch);
  UniformityMap without = analyze(m, false);
  CHECK(without.divergent("n"));
  CHECK(without.branch("entry") == BranchState::DivergentBranch);
}

TEST_CASE("annotating an already-uniform constant changes nothing") {
  Module m = parse_text(
      "kernel @k() {\nentry:\n  %c = const 3\n  assume_uniform %c\n  %d = add %c, %c\n  ret\n}\n");
  UniformityMap u = analyze(m, true);
  UniformityMap u2 = analyze(m, false);
  CHECK(u.value_state == u2.value_state);
}

TEST_CASE("annotation on tid is accepted statically (the simulator checks it)") {
  Module m = testutil::load(std::string(FIXTURES_DIR) + "/bad-annot.vir");
  UniformityMap u = analyze(m, true);
  CHECK_FALSE(u.divergent("t"));
}

TEST_CASE("Alg. 1: two constant call sites prove the argument uniform") {
  Module m = testutil::load(std::string(KERNELS_DIR) + "/calls_uniform.vir");
  ArgAnalysisResult ar = analyze_function_arguments(m, true);
  CHECK(ar.summaries.at("helper").uarg[0] == UniState::Uniform);
  CHECK(ar.iterations <= 3);
}

TEST_CASE("Alg. 1: one tid call site flips the argument divergent") {
  Module m = testutil::load(std::string(KERNELS_DIR) + "/calls_divergent.vir");
  ArgAnalysisResult ar = analyze_function_arguments(m, true);
  CHECK(ar.summaries.at("helper").uarg[0] == UniState::Divergent);
}

TEST_CASE("Alg. 1: ret of a constant on all paths gives a uniform return") {
  Module m = parse_text(
      "kernel @k() {\nentry:\n  %r = call @f()\n  ret\n}\n"
      "internal func @f() {\nentry:\n  %c = const 7\n  ret %c\n}\n");
  ArgAnalysisResult ar = analyze_function_arguments(m, true);
  CHECK(ar.summaries.at("f").uret == UniState::Uniform);
  // and the call result seeds uniform in the caller
  UniformityMap u = analyze(m);
  CHECK_FALSE(u.divergent("r"));
}

TEST_CASE("Alg. 1: call under divergent control cannot prove the argument") {
  Module m = parse_text(
      "kernel @k(%n: i32) {\n"
      "entry:\n  %t = tid\n  %c = icmp slt %t, %n\n  br %c, ^a, ^j\n"
      "a:\n  %five = const 5\n  %r = call @f(%five)\n  br ^j\n"
      "j:\n  ret\n}\n"
      "internal func @f(%x: i32) {\nentry:\n  ret %x\n}\n");
  ArgAnalysisResult ar = analyze_function_arguments(m, true);
  CHECK(ar.summaries.at("f").uarg[0] == UniState::Divergent);
}

TEST_CASE("UPtrOut: uniform stores under uniform control prove the pointee") {
  Module m = parse_text(
      "kernel @k(%p: addr) {\nentry:\n  call @w(%p)\n  call @w(%p)\n  ret\n}\n"
      "internal func @w(%q: addr) {\n"
      "entry:\n  %c = const 9\n  store %c, %q\n  ret\n}\n");
  ArgAnalysisResult ar = analyze_function_arguments(m, true);
  CHECK(ar.summaries.at("w").uptr_out[0] == UniState::Uniform);

  Module m2 = parse_text(
      "kernel @k(%p: addr) {\nentry:\n  call @w(%p)\n  ret\n}\n"
      "internal func @w(%q: addr) {\n"
      "entry:\n  %t = tid\n  store %t, %q\n  ret\n}\n");
  ArgAnalysisResult ar2 = analyze_function_arguments(m2, true);
  CHECK(ar2.summaries.at("w").uptr_out[0] == UniState::Divergent);
}

TEST_CASE("removing a uniform flag never turns a divergent result uniform") {
  // anti-monotonicity in annotations
  const char* with_flag =
      "kernel @k(%n: i32 uniform) {\n"
      "entry:\n  %t = tid\n  %a = add %n, %n\n  %b = add %a, %t\n  ret\n}\n";
  const char* without_flag =
      "kernel @k(%n: i32) {\n"
      "entry:\n  %t = tid\n  %a = add %n, %n\n  %b = add %a, %t\n  ret\n}\n";
  UniformityMap u1 = analyze(parse_text(with_flag));
  UniformityMap u2 = analyze(parse_text(without_flag));
  for (auto& [name, st] : u1.value_state) {
    if (st == UniState::Divergent) {
      CAPTURE(name);
      CHECK(u2.value_state.at(name) == UniState::Divergent);
    }
  }
}

TEST_CASE("uniformity dump is deterministic") {
  Module m = testutil::load(std::string(KERNELS_DIR) + "/calls_uniform.vir");
  std::string a = dump_uniformity(m, true);
  std::string b = dump_uniformity(m, true);
  CHECK(a == b);
  CHECK(a.find("UArg=[U]") != std::string::npos);
}
