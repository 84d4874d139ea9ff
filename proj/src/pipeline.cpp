#include "simtforge/pipeline.hpp"

#include <sstream>

#include "simtforge/cfg.hpp"
#include "simtforge/diverge.hpp"
#include "simtforge/late_phase.hpp"
#include "simtforge/normalize.hpp"
#include "simtforge/printer.hpp"
#include "simtforge/reconstruct.hpp"
#include "simtforge/verifier.hpp"

namespace simtforge {

namespace {

void count_static(const Module& m, PassLogEntry& e) {
  e.blocks = 0;
  for (auto& f : m.functions) {
    e.blocks += static_cast<int>(f.blocks.size());
    for_each_instruction(f, [&](const Instruction& i) {
      if (i.op == Opcode::Split) e.static_splits += 1;
      if (i.op == Opcode::Join) e.static_joins += 1;
      if (i.op == Opcode::Pred) e.static_preds += 1;
    });
  }
}

}  // namespace

PipelineResult run_pipeline(const Module& input, const PipelineConfig& cfg,
                            const std::string& stop_after) {
  PipelineResult res;
  res.module = input;
  Module& m = res.module;

  auto log_pass = [&](const std::string& name, int before, const PassStats& stats) {
    PassLogEntry e;
    e.pass = name;
    e.instrs_before = before;
    e.instrs_after = count_instructions(m);
    e.inserted = stats.inserted;
    e.removed = stats.removed;
    count_static(m, e);
    res.log.push_back(e);
  };
  auto stop = [&](const std::string& name) { return stop_after == name; };

  // simplify
  {
    PassStats s;
    int before = count_instructions(m);
    for (auto& f : m.functions) {
      PassStats p = simplify_cfg(f);
      s.inserted += p.inserted;
      s.removed += p.removed;
    }
    log_pass("simplify", before, s);
    if (stop("simplify")) return res;
  }

  // selects
  {
    ArgAnalysisResult ar = analyze_function_arguments(m, cfg.annotations);
    PassStats s;
    int before = count_instructions(m);
    for (auto& f : m.functions) {
      UniformityMap u = compute_uniformity(f, m, ar.summaries, cfg.annotations);
      PassStats p = normalize_selects(f, u, cfg);
      s.inserted += p.inserted;
      s.removed += p.removed;
    }
    log_pass("selects", before, s);
    if (stop("selects")) return res;
  }

  // loops
  {
    PassStats s;
    int before = count_instructions(m);
    for (auto& f : m.functions) {
      PassStats p = canonicalize_loops(f);
      s.inserted += p.inserted;
      s.removed += p.removed;
    }
    log_pass("loops", before, s);
    if (stop("loops")) return res;
  }

  // structurize
  {
    PassStats s;
    int before = count_instructions(m);
    for (auto& f : m.functions) {
      PassStats p = structurize(f);
      s.inserted += p.inserted;
      s.removed += p.removed;
    }
    // node splitting may leave freshly canonicalizable shapes; loops stay
    // canonical on reducible inputs, so this is a no-op there
    for (auto& f : m.functions) {
      PassStats p = canonicalize_loops(f);
      s.inserted += p.inserted;
      s.removed += p.removed;
    }
    log_pass("structurize", before, s);
    if (stop("structurize")) return res;
  }

  // recon
  if (cfg.recon) {
    ArgAnalysisResult ar = analyze_function_arguments(m, cfg.annotations);
    PassStats s;
    int before = count_instructions(m);
    for (auto& f : m.functions) {
      UniformityMap u = compute_uniformity(f, m, ar.summaries, cfg.annotations);
      ReconstructStats r = reconstruct_cfg(f, u);
      s.inserted += r.pass.inserted;
      s.removed += r.pass.removed;
    }
    log_pass("recon", before, s);
  }
  if (stop("recon")) return res;

  // diverge: classify + transform_loop + transform_branch
  {
    ArgAnalysisResult ar = analyze_function_arguments(m, cfg.annotations);
    PassStats s;
    int before = count_instructions(m);
    for (auto& f : m.functions) {
      UniformityMap u = compute_uniformity(f, m, ar.summaries, cfg.annotations);
      // this is the analysis the dynamic uniformity check runs against
      auto& uniform_names = res.uniform.values[f.name];
      for (auto& [name, st] : u.value_state)
        if (st == UniState::Uniform) uniform_names.insert(name);

      Cfg g = build_cfg(f);
      DomTree dom = compute_dom_tree(f, g);
      PostDomTree pd = compute_postdom_tree(f, g);
      LoopForest lf = build_loop_forest(f, g, dom);
      DivergencePlan plan = classify_branches(f, u, g, pd, lf);
      PassStats pl = transform_loop(f, plan, g, lf);
      PassStats pb = transform_branch(f, plan, g, dom);
      s.inserted += pl.inserted + pb.inserted;
      s.removed += pl.removed + pb.removed;
    }
    log_pass("diverge", before, s);
    if (stop("diverge")) return res;
  }

  // demote
  {
    PassStats s;
    int before = count_instructions(m);
    for (auto& f : m.functions) {
      PassStats p = demote_phis(f, cfg);
      s.inserted += p.inserted;
      s.removed += p.removed;
    }
    m.stage = Stage::Lowered;
    log_pass("demote", before, s);
    if (stop("demote")) return res;
  }

  // repair (identity on clean pipeline output)
  {
    PassStats s;
    int before = count_instructions(m);
    s = repair_module(m);
    log_pass("repair", before, s);
  }
  return res;
}

std::string pass_log_json(const std::vector<PassLogEntry>& log) {
  std::ostringstream os;
  os << "{\"passes\": [";
  for (size_t i = 0; i < log.size(); ++i) {
    const PassLogEntry& e = log[i];
    if (i) os << ", ";
    os << "{\"blocks\": " << e.blocks << ", \"inserted\": " << e.inserted
       << ", \"instrs_after\": " << e.instrs_after
       << ", \"instrs_before\": " << e.instrs_before << ", \"pass\": \"" << e.pass
       << "\", \"removed\": " << e.removed << ", \"static_joins\": " << e.static_joins
       << ", \"static_preds\": " << e.static_preds
       << ", \"static_splits\": " << e.static_splits << "}";
  }
  os << "]}";
  return os.str();
}

ProvisionedArgs provision_args(const Function& kernel, const PipelineConfig& cfg) {
  ProvisionedArgs out;
  static const uint32_t kScalars[] = {0, 7, 13, 5, 3, 17, 29, 2};
  uint32_t base = 0;
  int scalar_ix = 0;
  int buf_ix = 0;
  for (auto& p : kernel.params) {
    if (p.type == ValueType::Addr) {
      uint32_t size = std::max<uint32_t>(64, cfg.total_threads());
      out.args.push_back(base);
      out.mem_init.resize(base + size, 0);
      for (uint32_t j = 0; j < size; ++j)
        out.mem_init[base + j] = (j * 7 + 1009u * buf_ix + 3) & 0xffff;
      base += size;
      ++buf_ix;
    } else {
      uint32_t v = scalar_ix == 0 ? static_cast<uint32_t>(cfg.total_threads())
                                  : kScalars[scalar_ix % 8];
      out.args.push_back(p.type == ValueType::I1 ? 1 : v);
      ++scalar_ix;
    }
  }
  return out;
}

std::optional<std::string> warp_intrinsic_precheck(const Module& input,
                                                   bool annotations) {
  // the check needs single-exit functions; analyze a simplified copy
  Module m = input;
  for (auto& f : m.functions) simplify_cfg(f);
  ArgAnalysisResult ar = analyze_function_arguments(m, annotations);
  for (auto& f : m.functions) {
    bool has_intrinsic = false;
    for_each_instruction(f, [&](const Instruction& i) {
      switch (i.op) {
        case Opcode::VoteAll:
        case Opcode::VoteAny:
        case Opcode::VoteBallot:
        case Opcode::Shfl:
          has_intrinsic = true;
          break;
        default:
          break;
      }
    });
    if (!has_intrinsic) continue;
    UniformityMap u = compute_uniformity(f, m, ar.summaries, annotations);
    Cfg cfg = build_cfg(f);
    PostDomTree pd = compute_postdom_tree(f, cfg);
    Cdg cdg = build_cdg(f, cfg, pd);
    for (size_t bi = 0; bi < f.blocks.size(); ++bi) {
      bool block_has = false;
      for (auto& ins : f.blocks[bi].body)
        switch (ins.op) {
          case Opcode::VoteAll:
          case Opcode::VoteAny:
          case Opcode::VoteBallot:
          case Opcode::Shfl:
            block_has = true;
            break;
          default:
            break;
        }
      if (!block_has) continue;
      for (int a : cdg_ancestors(cdg, static_cast<int>(bi)))
        if (u.branch(f.blocks[a].label) == BranchState::DivergentBranch)
          return "@" + f.name + " ^" + f.blocks[bi].label +
                 ": warp intrinsic under divergent control; the scalar oracle "
                 "cannot define its cross-lane semantics";
    }
  }
  return std::nullopt;
}

CompareOutcome compare_module(const Module& high, const PipelineConfig& cfg,
                              const std::vector<uint32_t>& args,
                              const std::vector<uint32_t>& mem_init,
                              const CompareOptions& opts) {
  CompareOutcome out;
  auto violations = verify_module(high);
  if (!violations.empty()) {
    out.kind = CompareOutcome::Kind::VerifyError;
    out.detail = violations.front().str();
    return out;
  }
  if (auto reject = warp_intrinsic_precheck(high, cfg.annotations)) {
    out.kind = CompareOutcome::Kind::Rejected;
    out.detail = *reject;
    return out;
  }

  out.oracle = run_oracle(high, cfg, args, mem_init);
  if (!out.oracle.ok) {
    out.kind = CompareOutcome::Kind::OracleError;
    out.detail = out.oracle.error;
    return out;
  }

  PipelineResult lowered = run_pipeline(high, cfg, opts.repair ? "" : "demote");
  if (opts.perturb_mode) {
    for (auto& f : lowered.module.functions)
      perturb(f, static_cast<PerturbMode>(*opts.perturb_mode), opts.perturb_seed);
    if (opts.repair) repair_module(lowered.module);
  }

  SimOptions so;
  so.launch = LaunchMode::Kernel;
  so.uniform = &lowered.uniform;
  so.check_invariants = true;
  out.sim = run_simt(lowered.module, cfg, args, mem_init, so);
  if (!out.sim.ok()) {
    out.kind = CompareOutcome::Kind::SimError;
    out.detail = out.sim.error;
    return out;
  }

  OutcomeDiff d =
      diff_outcomes(out.sim.memory, out.sim.rets, out.oracle.memory, out.oracle.rets);
  if (d.match) {
    out.kind = CompareOutcome::Kind::Match;
  } else {
    out.kind = CompareOutcome::Kind::Mismatch;
    out.detail = d.report;
  }
  return out;
}

}  // namespace simtforge
