#include "simtforge/uniformity.hpp"

#include <algorithm>
#include <functional>
#include <sstream>

namespace simtforge {

namespace {

bool externally_entered(const Module& m, const Function& f) {
  if (f.is_kernel || f.linkage == Linkage::External) return true;
  for (auto& g : m.functions) {
    bool spawned = false;
    for_each_instruction(g, [&](const Instruction& i) {
      if (i.op == Opcode::Wspawn && i.operands[1].name == f.name) spawned = true;
    });
    if (spawned) return true;
  }
  return false;
}

}  // namespace

UniformityMap seed_uniformity(const Function& f, const Module& m,
                              const SummaryMap& summaries) {
  UniformityMap u;
  const FunctionSummary* self = nullptr;
  if (auto it = summaries.find(f.name); it != summaries.end()) self = &it->second;

  for (size_t i = 0; i < f.params.size(); ++i) {
    const Param& p = f.params[i];
    UniState s;
    if (p.uniform_flag) {
      s = UniState::Uniform;
    } else if (self && !externally_entered(m, f)) {
      s = self->uarg[i];
    } else {
      s = UniState::Divergent;
    }
    u.value_state[p.name] = s;
  }

  for_each_instruction(f, [&](const Instruction& ins) {
    if (!ins.has_result()) return;
    UniState s = UniState::Uniform;
    switch (ins.op) {
      case Opcode::Tid:
      case Opcode::AtomicAdd:
      case Opcode::Shfl:
      case Opcode::Load:
        s = UniState::Divergent;
        break;
      case Opcode::Const:
      case Opcode::Ntid:
      case Opcode::Nwid:
      case Opcode::Wid:
      case Opcode::Coreid:
      case Opcode::VoteAll:
      case Opcode::VoteAny:
      case Opcode::VoteBallot:
        s = UniState::Uniform;
        break;
      case Opcode::Call: {
        auto it = summaries.find(ins.operands[0].name);
        s = (it != summaries.end() && it->second.uret == UniState::Uniform)
                ? UniState::Uniform
                : UniState::Divergent;
        break;
      }
      default:
        s = UniState::Uniform;  // raised by propagation if an operand is divergent
        break;
    }
    u.value_state[ins.result] = s;
  });
  return u;
}

namespace {

// Results whose state is fixed by the seed and never raised by the data rule:
// vote reductions broadcast one value to every lane, and call results are
// governed by the callee's URet summary.
bool data_rule_exempt(Opcode op) {
  switch (op) {
    case Opcode::Const:
    case Opcode::Tid:
    case Opcode::Ntid:
    case Opcode::Wid:
    case Opcode::Nwid:
    case Opcode::Coreid:
    case Opcode::VoteAll:
    case Opcode::VoteAny:
    case Opcode::VoteBallot:
    case Opcode::Call:
    case Opcode::AtomicAdd:
    case Opcode::Shfl:
    case Opcode::Load:
      return true;
    default:
      return false;
  }
}

void derive_branch_states(const Function& f, UniformityMap& u) {
  for (auto& b : f.blocks) {
    BranchState s = BranchState::NonConditional;
    if (b.term.op == Opcode::CondBr)
      s = u.divergent(b.term.operands[0].name) ? BranchState::DivergentBranch
                                               : BranchState::UniformBranch;
    u.branch_state[b.label] = s;
  }
}

}  // namespace

UniformityMap propagate_uniformity(const Function& f, const Module& m,
                                   const UniformityMap& seeds, const Cfg& cfg,
                                   const PostDomTree& pd,
                                   const std::unordered_set<std::string>& pinned) {
  (void)m;
  UniformityMap u = seeds;
  for (auto& p : pinned) u.value_state[p] = UniState::Uniform;

  auto raise = [&](const std::string& v) -> bool {
    if (pinned.count(v)) return false;
    auto it = u.value_state.find(v);
    if (it == u.value_state.end()) {
      u.value_state[v] = UniState::Divergent;
      return true;
    }
    if (it->second == UniState::Divergent) return false;
    it->second = UniState::Divergent;
    return true;
  };

  bool changed = true;
  while (changed) {
    changed = false;
    // data rule
    for_each_instruction(f, [&](const Instruction& ins) {
      if (!ins.has_result() || data_rule_exempt(ins.op)) return;
      if (u.divergent(ins.result)) return;
      for (auto& o : ins.operands)
        if (o.kind == Operand::Kind::Value && u.divergent(o.name)) {
          if (raise(ins.result)) changed = true;
          break;
        }
    });
    // sync rule
    for (size_t bi = 0; bi < f.blocks.size(); ++bi) {
      const Block& b = f.blocks[bi];
      if (b.term.op != Opcode::CondBr) continue;
      if (!u.divergent(b.term.operands[0].name)) continue;
      int ip = pd.ipdom[bi];
      std::vector<bool> fwd = reachable_from(cfg, static_cast<int>(bi));
      std::vector<bool> region(cfg.size(), false);
      if (ip >= 0) {
        std::vector<bool> back = reaches(cfg, ip);
        for (size_t x = 0; x < cfg.size(); ++x) region[x] = fwd[x] && back[x];
      } else {
        region = fwd;  // no defined ipdom: everything downstream is suspect
      }
      for (size_t x = 0; x < cfg.size(); ++x) {
        if (!region[x] || cfg.preds[x].size() < 2) continue;
        for (auto& phi : f.blocks[x].phis)
          if (!u.divergent(phi.result) && raise(phi.result)) changed = true;
      }
    }
  }
  derive_branch_states(f, u);
  return u;
}

UniformityMap apply_annotations(const Function& f, const Module& m,
                                const UniformityMap& fixed_point, const Cfg& cfg,
                                const PostDomTree& pd, const SummaryMap& summaries) {
  std::unordered_set<std::string> pinned;
  for_each_instruction(f, [&](const Instruction& ins) {
    if (ins.op == Opcode::AssumeUniform) pinned.insert(ins.operands[0].name);
  });
  if (pinned.empty()) return fixed_point;
  UniformityMap seeds = seed_uniformity(f, m, summaries);
  return propagate_uniformity(f, m, seeds, cfg, pd, pinned);
}

UniformityMap compute_uniformity(const Function& f, const Module& m,
                                 const SummaryMap& summaries, bool annotations) {
  Cfg cfg = build_cfg(f);
  PostDomTree pd = compute_postdom_tree(f, cfg);
  UniformityMap seeds = seed_uniformity(f, m, summaries);
  UniformityMap u = propagate_uniformity(f, m, seeds, cfg, pd);
  if (annotations) u = apply_annotations(f, m, u, cfg, pd, summaries);
  return u;
}

UniformityMap compute_lowered_uniformity(const Function& f, const Module& m,
                                         const SummaryMap& summaries) {
  UniformityMap u = seed_uniformity(f, m, summaries);
  Cfg cfg = build_cfg(f);
  PostDomTree pd = compute_postdom_tree(f, cfg);
  Cdg cdg = build_cdg(f, cfg, pd);

  std::unordered_set<std::string> pinned;
  std::unordered_map<std::string, int> def_count;
  for_each_instruction(f, [&](const Instruction& i) {
    if (i.op == Opcode::AssumeUniform) pinned.insert(i.operands[0].name);
    if (i.has_result()) def_count[i.result] += 1;
  });
  for (auto& p : pinned) u.value_state[p] = UniState::Uniform;

  bool changed = true;
  while (changed) {
    changed = false;
    for (auto& b : f.blocks) {
      BranchState s = BranchState::NonConditional;
      if (b.term.op == Opcode::CondBr)
        s = u.divergent(b.term.operands[0].name) ? BranchState::DivergentBranch
                                                 : BranchState::UniformBranch;
      u.branch_state[b.label] = s;
    }
    for (size_t bi = 0; bi < f.blocks.size(); ++bi) {
      const Block& b = f.blocks[bi];
      bool control_divergent = false;
      for (int a : cdg_ancestors(cdg, static_cast<int>(bi)))
        if (u.branch(f.blocks[a].label) == BranchState::DivergentBranch)
          control_divergent = true;
      for (auto& ins : b.body) {
        if (!ins.has_result() || u.divergent(ins.result)) continue;
        if (pinned.count(ins.result)) continue;
        bool raise = false;
        if (!data_rule_exempt(ins.op)) {
          for (auto& o : ins.operands)
            if (o.kind == Operand::Kind::Value && u.divergent(o.name)) raise = true;
        }
        // multiply-assigned names are the demoted phis: divergent control
        // over any assignment makes the merged value divergent
        if (def_count[ins.result] > 1 && control_divergent) raise = true;
        if (raise) {
          u.value_state[ins.result] = UniState::Divergent;
          changed = true;
        }
      }
    }
  }
  derive_branch_states(f, u);
  return u;
}

namespace {

// Tarjan SCC over the call graph, then a topological sweep of the
// condensation (callers first).
std::vector<int> scc_condensation_order(const Module& m) {
  int n = static_cast<int>(m.functions.size());
  std::unordered_map<std::string, int> index;
  for (int i = 0; i < n; ++i) index[m.functions[i].name] = i;
  std::vector<std::vector<int>> edges(n);
  for (int i = 0; i < n; ++i)
    for_each_instruction(m.functions[i], [&](const Instruction& ins) {
      if (ins.op == Opcode::Call || ins.op == Opcode::Wspawn) {
        const std::string& callee =
            ins.op == Opcode::Call ? ins.operands[0].name : ins.operands[1].name;
        auto it = index.find(callee);
        if (it != index.end()) edges[i].push_back(it->second);
      }
    });

  std::vector<int> comp(n, -1), low(n, 0), num(n, -1), stack;
  std::vector<bool> on_stack(n, false);
  int counter = 0, ncomp = 0;
  std::function<void(int)> tarjan = [&](int v) {
    num[v] = low[v] = counter++;
    stack.push_back(v);
    on_stack[v] = true;
    for (int s : edges[v]) {
      if (num[s] < 0) {
        tarjan(s);
        low[v] = std::min(low[v], low[s]);
      } else if (on_stack[s]) {
        low[v] = std::min(low[v], num[s]);
      }
    }
    if (low[v] == num[v]) {
      for (;;) {
        int x = stack.back();
        stack.pop_back();
        on_stack[x] = false;
        comp[x] = ncomp;
        if (x == v) break;
      }
      ++ncomp;
    }
  };
  for (int i = 0; i < n; ++i)
    if (num[i] < 0) tarjan(i);

  // Tarjan numbers components in reverse topological order; walking
  // components from high to low visits callers before callees.
  std::vector<int> order;
  for (int c = ncomp - 1; c >= 0; --c)
    for (int i = 0; i < n; ++i)
      if (comp[i] == c) order.push_back(i);
  return order;
}

}  // namespace

ArgAnalysisResult analyze_function_arguments(const Module& m, bool annotations) {
  ArgAnalysisResult res;
  SummaryMap& summaries = res.summaries;
  for (auto& f : m.functions) {
    FunctionSummary s;
    for (auto& p : f.params)
      s.uarg.push_back(p.uniform_flag ? UniState::Uniform : UniState::Divergent);
    for (auto& p : f.params)
      if (p.type == ValueType::Addr) s.uptr_out.push_back(UniState::Divergent);
    s.uret = UniState::Divergent;
    summaries[f.name] = s;
  }

  std::vector<int> order = scc_condensation_order(m);
  std::unordered_map<std::string, UniformityMap> maps;
  std::unordered_map<std::string, Cdg> cdgs;

  auto analyze_func = [&](const Function& f) {
    Cfg cfg = build_cfg(f);
    PostDomTree pd = compute_postdom_tree(f, cfg);
    if (m.stage == Stage::Lowered) {
      maps.insert_or_assign(f.name, compute_lowered_uniformity(f, m, summaries));
    } else {
      UniformityMap seeds = seed_uniformity(f, m, summaries);
      UniformityMap u = propagate_uniformity(f, m, seeds, cfg, pd);
      if (annotations) u = apply_annotations(f, m, u, cfg, pd, summaries);
      maps.insert_or_assign(f.name, std::move(u));
    }
    cdgs.insert_or_assign(f.name, build_cdg(f, cfg, pd));
  };

  auto call_block_uniform = [&](const Function& caller, int block_index) {
    const Cdg& cdg = cdgs.at(caller.name);
    const UniformityMap& cu = maps.at(caller.name);
    for (int a : cdg_ancestors(cdg, block_index))
      if (cu.branch(caller.blocks[a].label) == BranchState::DivergentBranch)
        return false;
    return true;
  };

  int max_iter = 2;
  for (auto& f : m.functions) max_iter += static_cast<int>(f.params.size()) + 1;

  bool changed = true;
  while (changed && res.iterations < max_iter) {
    changed = false;
    ++res.iterations;
    for (int fi : order) analyze_func(m.functions[fi]);

    for (int fi : order) {
      const Function& f = m.functions[fi];
      FunctionSummary& s = summaries[f.name];
      const UniformityMap& u = maps.at(f.name);

      // AnalyzeRetVal
      UniState uret = UniState::Uniform;
      for (auto& b : f.blocks)
        if (b.term.op == Opcode::Ret && !b.term.operands.empty())
          if (u.divergent(b.term.operands[0].name)) uret = UniState::Divergent;
      if (uret == UniState::Uniform && s.uret == UniState::Divergent) {
        s.uret = UniState::Uniform;
        changed = true;
      }

      // AnalyzeArgument: internal linkage only, never for external entries
      if (f.linkage == Linkage::Internal && !externally_entered(m, f)) {
        for (size_t ai = 0; ai < f.params.size(); ++ai) {
          if (s.uarg[ai] == UniState::Uniform) continue;
          bool uniform = true;
          for (auto& g : m.functions) {
            for (size_t bi = 0; bi < g.blocks.size() && uniform; ++bi) {
              for_each_instruction(g.blocks[bi], [&](const Instruction& ins) {
                if (!uniform || ins.op != Opcode::Call) return;
                if (ins.operands[0].name != f.name) return;
                if (ai + 1 >= ins.operands.size()) return;
                const UniformityMap& gu = maps.at(g.name);
                if (gu.divergent(ins.operands[ai + 1].name)) uniform = false;
                else if (!call_block_uniform(g, static_cast<int>(bi))) uniform = false;
              });
            }
            if (!uniform) break;
          }
          if (uniform) {
            s.uarg[ai] = UniState::Uniform;
            changed = true;
          }
        }
      }

      // AnalyzePtrOut over values derived from each addr param
      int addr_index = 0;
      for (size_t ai = 0; ai < f.params.size(); ++ai) {
        if (f.params[ai].type != ValueType::Addr) continue;
        int slot = addr_index++;
        if (s.uptr_out[slot] == UniState::Uniform) continue;
        std::unordered_set<std::string> derived{f.params[ai].name};
        bool grew = true;
        while (grew) {
          grew = false;
          for_each_instruction(f, [&](const Instruction& ins) {
            if (!ins.has_result() || derived.count(ins.result)) return;
            bool from_derived = false;
            if (ins.op == Opcode::AddrAdd || ins.op == Opcode::Mov ||
                ins.op == Opcode::Phi || ins.op == Opcode::Select) {
              for (auto& o : ins.operands)
                if (o.kind == Operand::Kind::Value && derived.count(o.name))
                  from_derived = true;
            }
            if (from_derived) {
              derived.insert(ins.result);
              grew = true;
            }
          });
        }
        bool uniform = true;
        for (size_t bi = 0; bi < f.blocks.size() && uniform; ++bi) {
          for_each_instruction(f.blocks[bi], [&](const Instruction& ins) {
            if (!uniform) return;
            if (ins.op == Opcode::Store && derived.count(ins.operands[1].name)) {
              if (u.divergent(ins.operands[0].name) ||
                  !call_block_uniform(f, static_cast<int>(bi)))
                uniform = false;
            }
            if (ins.op == Opcode::AtomicAdd && derived.count(ins.operands[0].name))
              uniform = false;
            if (ins.op == Opcode::Call) {
              for (size_t k = 1; k < ins.operands.size(); ++k)
                if (derived.count(ins.operands[k].name)) uniform = false;
            }
          });
        }
        if (uniform) {
          s.uptr_out[slot] = UniState::Uniform;
          changed = true;
        }
      }
    }
  }
  return res;
}

std::string dump_uniformity(const Module& m, bool annotations) {
  ArgAnalysisResult ar = analyze_function_arguments(m, annotations);
  std::ostringstream os;
  for (auto& f : m.functions) {
    UniformityMap u = compute_uniformity(f, m, ar.summaries, annotations);
    os << "uniformity @" << f.name << "\n";
    for (auto& p : f.params)
      os << "  %" << p.name << ": " << (u.divergent(p.name) ? "D" : "U") << "\n";
    for (auto& b : f.blocks)
      for_each_instruction(b, [&](const Instruction& ins) {
        if (ins.has_result())
          os << "  %" << ins.result << ": " << (u.divergent(ins.result) ? "D" : "U")
             << "\n";
      });
    std::vector<std::string> labels;
    for (auto& b : f.blocks) labels.push_back(b.label);
    std::sort(labels.begin(), labels.end());
    for (auto& l : labels) {
      BranchState s = u.branch(l);
      os << "  branch ^" << l << ": "
         << (s == BranchState::NonConditional ? "-"
             : s == BranchState::UniformBranch ? "U"
                                               : "D")
         << "\n";
    }
  }
  os << "summaries\n";
  std::vector<std::string> names;
  for (auto& f : m.functions) names.push_back(f.name);
  std::sort(names.begin(), names.end());
  for (auto& n : names) {
    const FunctionSummary& s = ar.summaries.at(n);
    os << "  @" << n << ": UArg=[";
    for (size_t i = 0; i < s.uarg.size(); ++i)
      os << (i ? "," : "") << (s.uarg[i] == UniState::Uniform ? "U" : "D");
    os << "] UPtrOut=[";
    for (size_t i = 0; i < s.uptr_out.size(); ++i)
      os << (i ? "," : "") << (s.uptr_out[i] == UniState::Uniform ? "U" : "D");
    os << "] URet=" << (s.uret == UniState::Uniform ? "U" : "D") << "\n";
  }
  os << "iterations " << ar.iterations << "\n";
  return os.str();
}

}  // namespace simtforge
