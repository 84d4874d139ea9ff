#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "simtforge/cfg.hpp"
#include "simtforge/diverge.hpp"
#include "simtforge/fuzz.hpp"
#include "simtforge/late_phase.hpp"
#include "simtforge/parser.hpp"
#include "simtforge/pipeline.hpp"
#include "simtforge/printer.hpp"
#include "simtforge/sim.hpp"
#include "simtforge/uniformity.hpp"
#include "simtforge/verifier.hpp"

using namespace simtforge;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;
constexpr int kExitProperty = 3;
constexpr int kExitPass = 4;

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

Module parse_or_exit(const std::string& path) {
  ParseResult r = parse_module(read_file(path));
  if (!r.ok()) {
    std::cerr << path << ": " << r.error.str() << "\n";
    std::exit(kExitRuntime);
  }
  return *r.module;
}

struct ConfigFlags {
  PipelineConfig cfg;
  std::string config_file;

  void attach(CLI::App* app) {
    app->add_option("--config", config_file, "key=value config file; flags win");
    app->add_option("--warps", cfg.warp_count, "warps per launch");
    app->add_option("--threads", cfg.warp_size, "threads per warp");
    app->add_option("--mem-words", cfg.mem_words, "global memory size in words");
    app->add_option("--step-limit", cfg.step_limit, "dynamic instruction limit");
    app->add_flag("--zicond,!--no-zicond", cfg.zicond, "keep selects branchless (cmov)");
    app->add_flag("--recon,!--no-recon", cfg.recon, "enable CFG reconstruction");
    app->add_flag("--annotations,!--no-annotations", cfg.annotations,
                  "honor assume_uniform annotations");
  }

  // The file supplies defaults; explicitly passed flags override it.
  void finalize(CLI::App* app) {
    if (config_file.empty()) return;
    std::ifstream in(config_file);
    if (!in) throw std::runtime_error("cannot open config " + config_file);
    std::string line;
    auto overridden = [&](const char* flag) { return app->count(flag) > 0; };
    while (std::getline(in, line)) {
      auto hash = line.find('#');
      if (hash != std::string::npos) line = line.substr(0, hash);
      auto eq = line.find('=');
      if (eq == std::string::npos) continue;
      auto trim = [](std::string s) {
        size_t a = s.find_first_not_of(" \t\r");
        size_t b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
      };
      std::string key = trim(line.substr(0, eq));
      std::string val = trim(line.substr(eq + 1));
      bool truthy = val == "1" || val == "true" || val == "on";
      if (key == "warps" && !overridden("--warps")) cfg.warp_count = std::stoi(val);
      else if (key == "threads" && !overridden("--threads")) cfg.warp_size = std::stoi(val);
      else if (key == "mem-words" && !overridden("--mem-words")) cfg.mem_words = std::stoul(val);
      else if (key == "step-limit" && !overridden("--step-limit")) cfg.step_limit = std::stoull(val);
      else if (key == "zicond" && !overridden("--zicond")) cfg.zicond = truthy;
      else if (key == "recon" && !overridden("--recon")) cfg.recon = truthy;
      else if (key == "annotations" && !overridden("--annotations")) cfg.annotations = truthy;
    }
    cfg.validate();
  }
};

struct RunArgs {
  std::vector<std::string> args;  // name=value
  std::vector<std::string> bufs;  // name=size[:initfile]

  void attach(CLI::App* app) {
    app->add_option("--arg", args, "kernel scalar argument name=value");
    app->add_option("--buf", bufs, "kernel buffer name=size[:initfile]");
  }

  // Buffers are laid out in parameter order from word 0.
  ProvisionedArgs provision(const Function& kernel) const {
    ProvisionedArgs out;
    auto scalar = [&](const std::string& name) -> std::optional<uint32_t> {
      for (auto& a : args) {
        auto eq = a.find('=');
        if (eq != std::string::npos && a.substr(0, eq) == name)
          return static_cast<uint32_t>(std::stoll(a.substr(eq + 1)));
      }
      return std::nullopt;
    };
    auto buffer = [&](const std::string& name)
        -> std::optional<std::pair<uint32_t, std::string>> {
      for (auto& b : bufs) {
        auto eq = b.find('=');
        if (eq == std::string::npos || b.substr(0, eq) != name) continue;
        std::string rest = b.substr(eq + 1);
        auto colon = rest.find(':');
        uint32_t size = static_cast<uint32_t>(
            std::stoul(colon == std::string::npos ? rest : rest.substr(0, colon)));
        std::string file = colon == std::string::npos ? "" : rest.substr(colon + 1);
        return std::make_pair(size, file);
      }
      return std::nullopt;
    };

    uint32_t base = 0;
    for (auto& p : kernel.params) {
      if (p.type == ValueType::Addr) {
        uint32_t size = 64;
        std::string init;
        if (auto b = buffer(p.name)) {
          size = b->first;
          init = b->second;
        }
        out.args.push_back(base);
        out.mem_init.resize(base + size, 0);
        if (!init.empty()) {
          std::ifstream in(init);
          if (!in) throw std::runtime_error("cannot open init file " + init);
          std::string word;
          uint32_t at = base;
          while (in >> word && at < base + size)
            out.mem_init[at++] = static_cast<uint32_t>(std::stoul(word, nullptr, 16));
        }
        base += size;
      } else {
        out.args.push_back(scalar(p.name).value_or(0));
      }
    }
    return out;
  }
};

int cmd_check(const std::string& path) {
  ParseResult r = parse_module(read_file(path));
  if (!r.ok()) {
    std::cerr << path << ": " << r.error.str() << "\n";
    return kExitRuntime;
  }
  auto violations = verify_module(*r.module);
  for (auto& v : violations) std::cout << v.str() << "\n";
  if (violations.empty()) {
    std::cout << "ok\n";
    return kExitOk;
  }
  return kExitProperty;
}

int cmd_analyze(const std::string& path, const std::string& dump, bool annotations) {
  Module m = parse_or_exit(path);
  try {
    if (dump == "uniformity") {
      std::cout << dump_uniformity(m, annotations);
      return kExitOk;
    }
    for (auto& f : m.functions) {
      if (dump == "dom") std::cout << dump_dom(f);
      else if (dump == "postdom") std::cout << dump_postdom(f);
      else if (dump == "loops") std::cout << dump_loops(f);
      else if (dump == "cdg") std::cout << dump_cdg(f);
      else {
        std::cerr << "unknown dump kind '" << dump << "'\n";
        return kExitUsage;
      }
    }
  } catch (const AnalysisError& e) {
    std::cerr << "analysis error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_lower(const std::string& path, const std::string& out,
              const std::string& stop_after, const std::string& pass_log,
              const PipelineConfig& cfg) {
  Module m = parse_or_exit(path);
  auto violations = verify_module(m);
  if (!violations.empty()) {
    for (auto& v : violations) std::cerr << v.str() << "\n";
    return kExitProperty;
  }
  try {
    PipelineResult res = run_pipeline(m, cfg, stop_after);
    std::string text = print_module(res.module);
    if (out.empty()) std::cout << text;
    else write_file(out, text);
    if (!pass_log.empty()) write_file(pass_log, pass_log_json(res.log) + "\n");
    return kExitOk;
  } catch (const PassError& e) {
    std::cerr << "pass '" << e.pass << "' failed: " << e.what() << "\n";
    return kExitPass;
  }
}

int cmd_run(const std::string& path, const RunArgs& ra, const std::string& launch,
            const std::string& mem_dump, const std::string& metrics_out,
            const PipelineConfig& cfg) {
  Module m = parse_or_exit(path);
  auto violations = verify_module(m);
  if (!violations.empty()) {
    for (auto& v : violations) std::cerr << v.str() << "\n";
    return kExitProperty;
  }
  ProvisionedArgs pa = ra.provision(*m.kernel());
  SimOptions so;
  so.launch = launch == "raw" ? LaunchMode::Raw : LaunchMode::Kernel;
  SimResult res = run_simt(m, cfg, pa.args, pa.mem_init, so);
  if (!metrics_out.empty()) write_file(metrics_out, metrics_to_json(res.metrics) + "\n");
  if (res.status == SimResult::Status::UniformityViolation) {
    std::cerr << "uniformity violation: " << res.error << "\n";
    return kExitProperty;
  }
  if (res.status == SimResult::Status::RuntimeError) {
    std::cerr << "runtime error: " << res.error << "\n";
    return kExitRuntime;
  }
  if (!mem_dump.empty()) {
    auto colon = mem_dump.find(':');
    uint32_t start = static_cast<uint32_t>(std::stoul(mem_dump.substr(0, colon)));
    uint32_t count = colon == std::string::npos
                         ? 16
                         : static_cast<uint32_t>(std::stoul(mem_dump.substr(colon + 1)));
    char buf[16];
    for (uint32_t i = start; i < start + count && i < res.memory.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%08x", res.memory[i]);
      std::cout << buf << "\n";
    }
  }
  return kExitOk;
}

int cmd_compare(const std::string& path, const RunArgs& ra, bool auto_args,
                bool repair, const std::string& metrics_out, const PipelineConfig& cfg) {
  Module m = parse_or_exit(path);
  ProvisionedArgs pa =
      auto_args ? provision_args(*m.kernel(), cfg) : ra.provision(*m.kernel());
  CompareOptions co;
  co.repair = repair;
  CompareOutcome out = compare_module(m, cfg, pa.args, pa.mem_init, co);
  if (!metrics_out.empty())
    write_file(metrics_out, metrics_to_json(out.sim.metrics) + "\n");
  switch (out.kind) {
    case CompareOutcome::Kind::Match:
      std::cout << "Match\n";
      std::cout << "simt:   " << metrics_to_json(out.sim.metrics) << "\n";
      std::cout << "oracle: {\"steps\": " << out.oracle.steps
                << ", \"threads\": " << cfg.total_threads() << "}\n";
      for (auto& v : out.sim.invariant_violations)
        std::cout << "invariant: " << v << "\n";
      return out.sim.invariant_violations.empty() ? kExitOk : kExitProperty;
    case CompareOutcome::Kind::Mismatch:
      std::cout << "Mismatch\n" << out.detail;
      std::cout << "simt:   " << metrics_to_json(out.sim.metrics) << "\n";
      return kExitProperty;
    case CompareOutcome::Kind::Rejected:
      std::cout << "Rejected: " << out.detail << "\n";
      return kExitProperty;
    case CompareOutcome::Kind::VerifyError:
      std::cerr << "verify: " << out.detail << "\n";
      return kExitProperty;
    default:
      std::cerr << "error: " << out.detail << "\n";
      return kExitRuntime;
  }
}

int cmd_perturb(const std::string& path, const std::string& out,
                const std::string& mode, uint64_t seed) {
  Module m = parse_or_exit(path);
  PerturbMode pm;
  if (mode == "invert") pm = PerturbMode::InvertBranch;
  else if (mode == "remat") pm = PerturbMode::RematerializePredicate;
  else if (mode == "select") pm = PerturbMode::ExpandSelect;
  else {
    std::cerr << "unknown mode '" << mode << "'\n";
    return kExitUsage;
  }
  bool any = false;
  for (auto& f : m.functions) {
    PerturbResult r = perturb(f, pm, seed);
    if (r.applied) {
      any = true;
      std::cerr << "perturbed @" << f.name << " at ^" << r.site << "\n";
    }
  }
  if (!any) std::cerr << "no applicable site\n";
  std::string text = print_module(m);
  if (out.empty()) std::cout << text;
  else write_file(out, text);
  return kExitOk;
}

int cmd_repair(const std::string& path, const std::string& out) {
  Module m = parse_or_exit(path);
  repair_module(m);
  std::string text = print_module(m);
  if (out.empty()) std::cout << text;
  else write_file(out, text);
  return kExitOk;
}

int cmd_fuzz(uint64_t seed, int count, const std::string& report,
             const std::string& perturb_mode, bool repair, const PipelineConfig& cfg) {
  FuzzOptions fo;
  fo.repair = repair;
  if (!perturb_mode.empty()) {
    if (perturb_mode == "invert") fo.perturb_mode = 0;
    else if (perturb_mode == "remat") fo.perturb_mode = 1;
    else if (perturb_mode == "select") fo.perturb_mode = 2;
    else {
      std::cerr << "unknown mode '" << perturb_mode << "'\n";
      return kExitUsage;
    }
  }
  FuzzResult res = fuzz_kernels(seed, count, cfg, fo);
  if (!report.empty()) write_file(report, res.report_json + "\n");
  std::cout << res.matches << "/" << res.count << " match, " << res.mismatches
            << " mismatch, " << res.errors << " errors\n";
  return (res.mismatches == 0 && res.errors == 0) ? kExitOk : kExitProperty;
}

int cmd_metrics_diff(const std::string& a_path, const std::string& b_path) {
  nlohmann::json a = nlohmann::json::parse(read_file(a_path));
  nlohmann::json b = nlohmann::json::parse(read_file(b_path));
  double da = a.at("dyn_instrs").get<double>();
  double db = b.at("dyn_instrs").get<double>();
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", db == 0 ? 0.0 : da / db);
  std::cout << "reduction_factor " << buf << "\n";
  std::cout << "a.dyn_instrs " << static_cast<uint64_t>(da) << "\n";
  std::cout << "b.dyn_instrs " << static_cast<uint64_t>(db) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"simtforge: SIMT divergence-management pipeline and harness"};
  app.require_subcommand(1);

  std::string file, out, dump = "dom", stop_after, pass_log, launch = "kernel";
  std::string mem_dump, metrics_out, mode = "invert", report, fuzz_perturb;
  uint64_t seed = 0;
  int count = 100;
  bool no_repair = false, auto_args = false, check_annotations = true;

  auto* check = app.add_subcommand("check", "parse and verify a module");
  check->add_option("file", file)->required();

  auto* analyze = app.add_subcommand("analyze", "print analysis tables");
  analyze->add_option("file", file)->required();
  analyze->add_option("--dump", dump, "dom|postdom|loops|cdg|uniformity");
  analyze->add_flag("--annotations,!--no-annotations", check_annotations,
                    "honor assume_uniform");

  ConfigFlags lower_cfg, run_cfg, compare_cfg, fuzz_cfg;

  auto* lower = app.add_subcommand("lower", "run the middle-end pipeline");
  lower->add_option("file", file)->required();
  lower->add_option("-o,--output", out);
  lower->add_option("--stop-after", stop_after,
                    "simplify|selects|loops|structurize|recon|diverge|demote|repair");
  lower->add_option("--pass-log", pass_log, "write the pass log JSON here");
  lower_cfg.attach(lower);

  RunArgs run_args, compare_args;
  auto* run = app.add_subcommand("run", "execute a Lowered module in lockstep");
  run->add_option("file", file)->required();
  run_args.attach(run);
  run->add_option("--launch", launch, "kernel|raw");
  run->add_option("--mem-dump", mem_dump, "start:count hex words to stdout");
  run->add_option("--metrics", metrics_out, "write metrics JSON here");
  run_cfg.attach(run);

  auto* compare = app.add_subcommand("compare", "lower and run both interpreters");
  compare->add_option("file", file)->required();
  compare_args.attach(compare);
  compare->add_flag("--auto-args", auto_args, "provision arguments deterministically");
  compare->add_flag("--no-repair", no_repair, "skip the late-phase safety net");
  compare->add_option("--metrics", metrics_out, "write simt metrics JSON here");
  compare_cfg.attach(compare);

  auto* pert = app.add_subcommand("perturb", "inject a late-phase hazard");
  pert->add_option("file", file)->required();
  pert->add_option("-o,--output", out);
  pert->add_option("--mode", mode, "invert|remat|select")->required();
  pert->add_option("--seed", seed);

  auto* rep = app.add_subcommand("repair", "run the divergence safety net");
  rep->add_option("file", file)->required();
  rep->add_option("-o,--output", out);

  auto* fuzz = app.add_subcommand("fuzz", "differential-test random kernels");
  fuzz->add_option("--seed", seed);
  fuzz->add_option("--count", count);
  fuzz->add_option("--report", report, "write the fuzz report JSON here");
  fuzz->add_option("--perturb", fuzz_perturb, "invert|remat|select per kernel");
  fuzz->add_flag("--no-repair", no_repair, "skip the safety net");
  fuzz_cfg.attach(fuzz);

  auto* mdiff = app.add_subcommand("metrics-diff", "dyn-instr reduction factor");
  std::string mfile_a, mfile_b;
  mdiff->add_option("a", mfile_a)->required();
  mdiff->add_option("b", mfile_b)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (check->parsed()) return cmd_check(file);
    if (analyze->parsed()) return cmd_analyze(file, dump, check_annotations);
    if (lower->parsed()) {
      lower_cfg.finalize(lower);
      return cmd_lower(file, out, stop_after, pass_log, lower_cfg.cfg);
    }
    if (run->parsed()) {
      run_cfg.finalize(run);
      return cmd_run(file, run_args, launch, mem_dump, metrics_out, run_cfg.cfg);
    }
    if (compare->parsed()) {
      compare_cfg.finalize(compare);
      return cmd_compare(file, compare_args, auto_args, !no_repair, metrics_out,
                         compare_cfg.cfg);
    }
    if (pert->parsed()) return cmd_perturb(file, out, mode, seed);
    if (rep->parsed()) return cmd_repair(file, out);
    if (fuzz->parsed()) {
      fuzz_cfg.finalize(fuzz);
      return cmd_fuzz(seed, count, report, fuzz_perturb, !no_repair, fuzz_cfg.cfg);
    }
    if (mdiff->parsed()) return cmd_metrics_diff(mfile_a, mfile_b);
  } catch (const PassError& e) {
    std::cerr << "pass '" << e.pass << "' failed: " << e.what() << "\n";
    return kExitPass;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
