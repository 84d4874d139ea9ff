#include "simtforge/cfg.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace simtforge {

Cfg build_cfg(const Function& f) {
  Cfg cfg;
  cfg.labels.reserve(f.blocks.size());
  for (size_t i = 0; i < f.blocks.size(); ++i) {
    cfg.labels.push_back(f.blocks[i].label);
    cfg.index[f.blocks[i].label] = static_cast<int>(i);
  }
  cfg.succs.resize(f.blocks.size());
  cfg.preds.resize(f.blocks.size());
  for (size_t i = 0; i < f.blocks.size(); ++i) {
    for (auto& s : successors(f.blocks[i].term)) {
      int t = cfg.of(s);
      if (t < 0) throw AnalysisError("branch to unknown label ^" + s);
      auto& sv = cfg.succs[i];
      if (std::find(sv.begin(), sv.end(), t) == sv.end()) sv.push_back(t);
      auto& pv = cfg.preds[t];
      if (std::find(pv.begin(), pv.end(), (int)i) == pv.end())
        pv.push_back(static_cast<int>(i));
    }
  }
  return cfg;
}

void require_all_reachable(const Function& f, const Cfg& cfg) {
  auto seen = reachable_from(cfg, 0);
  seen[0] = true;
  for (size_t i = 0; i < cfg.size(); ++i)
    if (!seen[i])
      throw AnalysisError("@" + f.name + " contains unreachable block ^" +
                          cfg.labels[i] + " (run simplify first)");
}

std::vector<bool> reachable_from(const Cfg& cfg, int b) {
  std::vector<bool> seen(cfg.size(), false);
  std::vector<int> stack;
  for (int s : cfg.succs[b])
    if (!seen[s]) {
      seen[s] = true;
      stack.push_back(s);
    }
  while (!stack.empty()) {
    int x = stack.back();
    stack.pop_back();
    for (int s : cfg.succs[x])
      if (!seen[s]) {
        seen[s] = true;
        stack.push_back(s);
      }
  }
  return seen;
}

std::vector<bool> reaches(const Cfg& cfg, int target) {
  std::vector<bool> seen(cfg.size(), false);
  std::vector<int> stack{target};
  seen[target] = true;
  while (!stack.empty()) {
    int x = stack.back();
    stack.pop_back();
    for (int p : cfg.preds[x])
      if (!seen[p]) {
        seen[p] = true;
        stack.push_back(p);
      }
  }
  return seen;
}

static std::vector<int> rpo_order(const Cfg& cfg) {
  std::vector<int> order;
  std::vector<char> state(cfg.size(), 0);
  std::function<void(int)> dfs = [&](int b) {
    state[b] = 1;
    for (int s : cfg.succs[b])
      if (!state[s]) dfs(s);
    order.push_back(b);
  };
  dfs(0);
  std::reverse(order.begin(), order.end());
  return order;
}

DomTree compute_dom_tree(const Function& f, const Cfg& cfg) {
  require_all_reachable(f, cfg);
  DomTree dt;
  dt.rpo = rpo_order(cfg);
  dt.rpo_num.assign(cfg.size(), -1);
  for (size_t i = 0; i < dt.rpo.size(); ++i) dt.rpo_num[dt.rpo[i]] = static_cast<int>(i);

  dt.idom.assign(cfg.size(), -1);
  dt.idom[0] = 0;
  auto meet = [&](int a, int b) {
    while (a != b) {
      while (dt.rpo_num[a] > dt.rpo_num[b]) a = dt.idom[a];
      while (dt.rpo_num[b] > dt.rpo_num[a]) b = dt.idom[b];
    }
    return a;
  };
  bool changed = true;
  while (changed) {
    changed = false;
    for (int b : dt.rpo) {
      if (b == 0) continue;
      int nd = -1;
      for (int p : cfg.preds[b]) {
        if (dt.idom[p] < 0) continue;
        nd = nd < 0 ? p : meet(nd, p);
      }
      if (nd >= 0 && dt.idom[b] != nd) {
        dt.idom[b] = nd;
        changed = true;
      }
    }
  }
  return dt;
}

PostDomTree compute_postdom_tree(const Function& f, const Cfg& cfg) {
  require_all_reachable(f, cfg);
  PostDomTree pt;
  std::vector<int> exits;
  for (size_t i = 0; i < f.blocks.size(); ++i)
    if (f.blocks[i].term.op == Opcode::Ret) exits.push_back(static_cast<int>(i));
  if (exits.size() != 1)
    throw AnalysisError("MultipleExits: @" + f.name + " has " +
                        std::to_string(exits.size()) + " exit blocks");
  pt.exit_block = exits[0];

  // postorder over the reverse graph from the exit
  std::vector<int> order;
  std::vector<char> state(cfg.size(), 0);
  std::function<void(int)> dfs = [&](int b) {
    state[b] = 1;
    for (int p : cfg.preds[b])
      if (!state[p]) dfs(p);
    order.push_back(b);
  };
  dfs(pt.exit_block);
  std::reverse(order.begin(), order.end());  // "reverse postorder" on reverse graph
  std::vector<int> num(cfg.size(), -1);
  for (size_t i = 0; i < order.size(); ++i) num[order[i]] = static_cast<int>(i);

  pt.ipdom.assign(cfg.size(), -1);
  pt.ipdom[pt.exit_block] = pt.exit_block;
  auto meet = [&](int a, int b) {
    while (a != b) {
      while (num[a] > num[b]) a = pt.ipdom[a];
      while (num[b] > num[a]) b = pt.ipdom[b];
    }
    return a;
  };
  bool changed = true;
  while (changed) {
    changed = false;
    for (int b : order) {
      if (b == pt.exit_block) continue;
      int nd = -1;
      for (int s : cfg.succs[b]) {
        if (num[s] < 0 || pt.ipdom[s] < 0) continue;
        nd = nd < 0 ? s : meet(nd, s);
      }
      if (nd >= 0 && pt.ipdom[b] != nd) {
        pt.ipdom[b] = nd;
        changed = true;
      }
    }
  }
  pt.ipdom[pt.exit_block] = -1;  // the root has no immediate post-dominator
  return pt;
}

LoopForest build_loop_forest(const Function& f, const Cfg& cfg, const DomTree& dom) {
  require_all_reachable(f, cfg);
  LoopForest forest;
  std::map<int, std::vector<int>> latches_of;  // header -> latches, ordered
  for (size_t n = 0; n < cfg.size(); ++n)
    for (int m : cfg.succs[n])
      if (dom.dominates(m, static_cast<int>(n))) latches_of[m].push_back(static_cast<int>(n));

  for (auto& [header, latches] : latches_of) {
    Loop loop;
    loop.header = header;
    loop.latches = latches;
    std::set<int> body{header};
    std::vector<int> stack;
    for (int l : latches)
      if (body.insert(l).second || l == header) stack.push_back(l);
    while (!stack.empty()) {
      int b = stack.back();
      stack.pop_back();
      if (b == header) continue;
      for (int p : cfg.preds[b])
        if (body.insert(p).second) stack.push_back(p);
    }
    loop.body.assign(body.begin(), body.end());

    // exits
    std::set<int> exit_targets;
    for (int b : loop.body)
      for (int s : cfg.succs[b])
        if (!body.count(s)) {
          loop.exit_edges.push_back({b, s});
          exit_targets.insert(s);
        }
    loop.exit_blocks.assign(exit_targets.begin(), exit_targets.end());

    // dedicated preheader: unique outside pred of header whose sole successor
    // is the header
    std::vector<int> outside;
    for (int p : cfg.preds[header])
      if (!body.count(p)) outside.push_back(p);
    if (outside.size() == 1 && cfg.succs[outside[0]].size() == 1)
      loop.preheader = outside[0];

    forest.loops.push_back(std::move(loop));
  }

  std::sort(forest.loops.begin(), forest.loops.end(), [&](const Loop& a, const Loop& b) {
    return dom.rpo_num[a.header] < dom.rpo_num[b.header];
  });
  // nesting: parent = smallest strictly larger loop containing the header
  for (size_t i = 0; i < forest.loops.size(); ++i) {
    int best = -1;
    size_t best_size = SIZE_MAX;
    for (size_t j = 0; j < forest.loops.size(); ++j) {
      if (i == j) continue;
      const Loop& outer = forest.loops[j];
      if (outer.body.size() > forest.loops[i].body.size() &&
          outer.contains(forest.loops[i].header) && outer.body.size() < best_size) {
        best = static_cast<int>(j);
        best_size = outer.body.size();
      }
    }
    forest.loops[i].parent = best;
  }
  return forest;
}

Reducibility check_reducible(const Function& f, const Cfg& cfg, const DomTree& dom,
                             uint64_t order_seed) {
  require_all_reachable(f, cfg);
  Reducibility res;
  // forward subgraph: drop every back edge (target dominates source)
  std::vector<std::vector<int>> fwd(cfg.size());
  for (size_t n = 0; n < cfg.size(); ++n)
    for (int s : cfg.succs[n])
      if (!dom.dominates(s, static_cast<int>(n))) fwd[n].push_back(s);

  if (order_seed != 0) {
    uint64_t x = order_seed;
    auto next = [&x]() {
      x ^= x << 13;
      x ^= x >> 7;
      x ^= x << 17;
      return x;
    };
    for (auto& v : fwd)
      for (size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[next() % i]);
  }

  // retreating edges in the forward subgraph witness irreducibility
  std::vector<char> state(cfg.size(), 0);  // 0 new, 1 on stack, 2 done
  std::function<void(int)> dfs = [&](int b) {
    state[b] = 1;
    for (int s : fwd[b]) {
      if (state[s] == 1)
        res.witness.push_back({b, s});
      else if (state[s] == 0)
        dfs(s);
    }
    state[b] = 2;
  };
  dfs(0);
  for (size_t i = 0; i < cfg.size(); ++i)
    if (state[i] == 0) dfs(static_cast<int>(i));
  res.reducible = res.witness.empty();
  std::sort(res.witness.begin(), res.witness.end());
  return res;
}

Cdg build_cdg(const Function& f, const Cfg& cfg, const PostDomTree& pd) {
  (void)f;
  Cdg cdg;
  cdg.dependents.resize(cfg.size());
  cdg.controllers.resize(cfg.size());
  for (size_t u = 0; u < cfg.size(); ++u) {
    if (pd.ipdom[u] < 0 && static_cast<int>(u) != pd.exit_block) continue;
    for (int v : cfg.succs[u]) {
      int runner = v;
      int stop = pd.ipdom[u];
      while (runner >= 0 && runner != stop) {
        auto& dep = cdg.dependents[u];
        if (std::find(dep.begin(), dep.end(), runner) == dep.end()) {
          dep.push_back(runner);
          cdg.controllers[runner].push_back(static_cast<int>(u));
        }
        runner = pd.ipdom[runner];
      }
    }
  }
  for (auto& v : cdg.dependents) std::sort(v.begin(), v.end());
  for (auto& v : cdg.controllers) std::sort(v.begin(), v.end());
  return cdg;
}

std::vector<int> cdg_ancestors(const Cdg& cdg, int b) {
  std::vector<bool> seen(cdg.controllers.size(), false);
  std::vector<int> stack{b}, out;
  while (!stack.empty()) {
    int x = stack.back();
    stack.pop_back();
    for (int c : cdg.controllers[x])
      if (!seen[c]) {
        seen[c] = true;
        out.push_back(c);
        stack.push_back(c);
      }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---- dumps ----

static std::vector<int> blocks_by_label(const Cfg& cfg) {
  std::vector<int> ix(cfg.size());
  for (size_t i = 0; i < cfg.size(); ++i) ix[i] = static_cast<int>(i);
  std::sort(ix.begin(), ix.end(),
            [&](int a, int b) { return cfg.labels[a] < cfg.labels[b]; });
  return ix;
}

std::string dump_dom(const Function& f) {
  Cfg cfg = build_cfg(f);
  DomTree dom = compute_dom_tree(f, cfg);
  std::ostringstream os;
  os << "dom @" << f.name << "\n";
  for (int b : blocks_by_label(cfg))
    os << "  idom(^" << cfg.labels[b] << ") = ^" << cfg.labels[dom.idom[b]] << "\n";
  return os.str();
}

std::string dump_postdom(const Function& f) {
  Cfg cfg = build_cfg(f);
  PostDomTree pd = compute_postdom_tree(f, cfg);
  std::ostringstream os;
  os << "postdom @" << f.name << "\n";
  for (int b : blocks_by_label(cfg)) {
    os << "  ipdom(^" << cfg.labels[b] << ") = ";
    if (pd.ipdom[b] < 0)
      os << (b == pd.exit_block ? "<exit>" : "<none>");
    else
      os << "^" << cfg.labels[pd.ipdom[b]];
    os << "\n";
  }
  return os.str();
}

std::string dump_loops(const Function& f) {
  Cfg cfg = build_cfg(f);
  DomTree dom = compute_dom_tree(f, cfg);
  LoopForest lf = build_loop_forest(f, cfg, dom);
  std::vector<const Loop*> loops;
  for (auto& l : lf.loops) loops.push_back(&l);
  std::sort(loops.begin(), loops.end(), [&](const Loop* a, const Loop* b) {
    return cfg.labels[a->header] < cfg.labels[b->header];
  });
  std::ostringstream os;
  os << "loops @" << f.name << "\n";
  for (auto* l : loops) {
    os << "  loop header=^" << cfg.labels[l->header];
    os << " preheader=" << (l->preheader < 0 ? "-" : "^" + cfg.labels[l->preheader]);
    std::vector<std::string> latches, body, exits;
    for (int x : l->latches) latches.push_back(cfg.labels[x]);
    for (int x : l->body) body.push_back(cfg.labels[x]);
    for (int x : l->exit_blocks) exits.push_back(cfg.labels[x]);
    std::sort(latches.begin(), latches.end());
    std::sort(body.begin(), body.end());
    std::sort(exits.begin(), exits.end());
    auto join = [](const std::vector<std::string>& v) {
      std::string s;
      for (size_t i = 0; i < v.size(); ++i) s += (i ? " ^" : "^") + v[i];
      return s;
    };
    os << " latches={" << join(latches) << "} body={" << join(body) << "} exits={"
       << join(exits) << "}\n";
  }
  if (lf.loops.empty()) os << "  (none)\n";
  return os.str();
}

std::string dump_cdg(const Function& f) {
  Cfg cfg = build_cfg(f);
  PostDomTree pd = compute_postdom_tree(f, cfg);
  Cdg cdg = build_cdg(f, cfg, pd);
  std::ostringstream os;
  os << "cdg @" << f.name << "\n";
  for (int b : blocks_by_label(cfg)) {
    std::vector<std::string> deps;
    for (int d : cdg.dependents[b]) deps.push_back(cfg.labels[d]);
    std::sort(deps.begin(), deps.end());
    os << "  ^" << cfg.labels[b] << " -> {";
    for (size_t i = 0; i < deps.size(); ++i) os << (i ? " ^" : "^") << deps[i];
    os << "} preds=" << cdg.controllers[b].size()
       << (cdg.is_leaf(b) ? " leaf" : "") << "\n";
  }
  return os.str();
}

}  // namespace simtforge
