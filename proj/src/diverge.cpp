#include "simtforge/diverge.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <unordered_set>

namespace simtforge {

DivergencePlan classify_branches(const Function& f, const UniformityMap& u,
                                 const Cfg& cfg, const PostDomTree& pd,
                                 const LoopForest& lf) {
  DivergencePlan plan;
  for (size_t bi = 0; bi < f.blocks.size(); ++bi) {
    const Block& b = f.blocks[bi];
    if (b.term.op != Opcode::CondBr) continue;
    if (u.branch(b.label) != BranchState::DivergentBranch) continue;
    int ip = pd.ipdom[bi];
    if (lf.is_latch(static_cast<int>(bi))) {
      const Loop* loop = nullptr;
      for (auto& l : lf.loops)
        for (int latch : l.latches)
          if (latch == static_cast<int>(bi) &&
              (!loop || l.body.size() < loop->body.size()))
            loop = &l;
      if (ip >= 0 && loop && loop->contains(ip))
        plan.d_branch.push_back({static_cast<int>(bi), ip});
      else
        plan.d_loop.push_back({static_cast<int>(bi), ip});
    } else {
      if (ip >= 0 && reachable_from(cfg, static_cast<int>(bi))[ip])
        plan.d_branch.push_back({static_cast<int>(bi), ip});
    }
  }
  return plan;
}

PassStats transform_loop(Function& f, const DivergencePlan& plan, const Cfg& cfg,
                         const LoopForest& lf) {
  PassStats stats;
  for (auto& [latch, exit_ix] : plan.d_loop) {
    const Loop* loop = nullptr;
    for (auto& l : lf.loops)
      for (int lx : l.latches)
        if (lx == latch && (!loop || l.body.size() < loop->body.size())) loop = &l;
    if (!loop || loop->preheader < 0)
      throw PassError("diverge", "divergent loop lacks a canonical preheader");
    Block& latch_blk = f.blocks[latch];
    if (latch_blk.term.op != Opcode::CondBr ||
        cfg.of(latch_blk.term.operands[1].name) != loop->header)
      throw PassError("diverge",
                      "MalformedLoop: latch terminator is not a 2-way branch to "
                      "header/exit");
    int exit_block = cfg.of(latch_blk.term.operands[2].name);
    if (exit_ix >= 0 && exit_block != exit_ix)
      throw PassError("diverge", "MalformedLoop: latch exit is not the loop exit");

    std::string m0 = f.fresh_value("m0");
    Instruction am;
    am.op = Opcode::Activemask;
    am.result = m0;
    f.blocks[loop->preheader].body.push_back(am);
    stats.inserted += 1;

    Instruction pred;
    pred.op = Opcode::Pred;
    pred.operands = {Operand::value(latch_blk.term.operands[0].name),
                     Operand::value(m0), latch_blk.term.operands[1],
                     latch_blk.term.operands[2]};
    latch_blk.term = pred;
    stats.inserted += 1;
    stats.removed += 1;

    Instruction tmc;
    tmc.op = Opcode::Tmc;
    tmc.operands = {Operand::value(m0)};
    f.blocks[exit_block].body.insert(f.blocks[exit_block].body.begin(), tmc);
    stats.inserted += 1;
  }
  return stats;
}

PassStats transform_branch(Function& f, const DivergencePlan& plan, const Cfg& cfg,
                           const DomTree& dom) {
  PassStats stats;
  std::map<int, std::vector<int>> by_ip;  // ipdom block -> branch blocks
  for (auto& [b, ip] : plan.d_branch) by_ip[ip].push_back(b);

  for (auto& [ip, branches] : by_ip) {
    // innermost-first: deeper RPO numbers first (a dominator always has a
    // smaller RPO number than its dominated splits)
    std::vector<int> order = branches;
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return dom.rpo_num[a] > dom.rpo_num[b]; });

    std::vector<Instruction> joins;
    for (int b : order) {
      Block& blk = f.blocks[b];
      if (blk.term.op != Opcode::CondBr)
        throw PassError("diverge", "UnreachableIpdom/NotABranch: bad d_branch entry");
      std::string tok = f.fresh_value("tok");
      Instruction split;
      split.op = Opcode::Split;
      split.result = tok;
      split.negate = false;
      split.operands = {Operand::value(blk.term.operands[0].name)};
      blk.body.push_back(split);
      Instruction join;
      join.op = Opcode::Join;
      join.operands = {Operand::value(tok)};
      joins.push_back(join);
      stats.inserted += 2;
    }
    Block& ip_blk = f.blocks[ip];
    ip_blk.body.insert(ip_blk.body.begin(), joins.begin(), joins.end());
  }
  (void)cfg;
  return stats;
}

PassStats demote_phis(Function& f, const PipelineConfig& cfg) {
  PassStats stats;
  Cfg g = build_cfg(f);

  // Copies are per edge. A predecessor with several successors gets a
  // dedicated edge block, so lanes leaving through another edge never
  // execute the copies (the phi value may still be live on that path).
  // Single-successor predecessors take the copies at their end, before any
  // trailing split so split/branch adjacency survives.
  std::vector<Block> edge_blocks;
  std::unordered_set<std::string> used_labels;
  for (auto& blk : f.blocks) used_labels.insert(blk.label);
  auto fresh_edge_label = [&](const std::string& base) {
    std::string c = base;
    for (int i = 0; used_labels.count(c); ++i) c = base + "." + std::to_string(i);
    used_labels.insert(c);
    return c;
  };
  for (size_t bi = 0; bi < f.blocks.size(); ++bi) {
    Block& b = f.blocks[bi];
    if (b.phis.empty()) continue;
    for (int p : g.preds[bi]) {
      // parallel copy: all reads happen before any write
      std::vector<std::pair<std::string, std::string>> copies;  // dst <- src
      for (auto& phi : b.phis) {
        const Operand* in = phi_incoming(phi, f.blocks[p].label);
        if (!in) continue;
        if (in->name != phi.result) copies.push_back({phi.result, in->name});
      }
      std::vector<Instruction> seq;
      auto emit = [&](const std::string& dst, const std::string& src) {
        Instruction mv;
        mv.op = Opcode::Mov;
        mv.result = dst;
        mv.operands = {Operand::value(src)};
        seq.push_back(mv);
      };
      while (!copies.empty()) {
        bool emitted = false;
        for (size_t i = 0; i < copies.size(); ++i) {
          bool dst_read = false;
          for (size_t j = 0; j < copies.size(); ++j)
            if (j != i && copies[j].second == copies[i].first) dst_read = true;
          if (!dst_read) {
            emit(copies[i].first, copies[i].second);
            copies.erase(copies.begin() + i);
            emitted = true;
            break;
          }
        }
        if (!emitted) {
          // cycle: rotate through a temporary
          std::string tmp = f.fresh_value("swap");
          emit(tmp, copies[0].first);
          for (auto& c : copies)
            if (c.second == copies[0].first) c.second = tmp;
          emit(copies[0].first, copies[0].second);
          copies.erase(copies.begin());
        }
      }
      if (seq.empty()) continue;
      Block& pred = f.blocks[p];
      if (g.succs[p].size() >= 2) {
        Block eb;
        eb.label = fresh_edge_label(pred.label + ".e");
        eb.body = std::move(seq);
        eb.term = {Opcode::Br, "", {Operand::label(b.label)}};
        retarget(pred.term, b.label, eb.label);
        stats.inserted += static_cast<int>(eb.body.size()) + 1;
        edge_blocks.push_back(std::move(eb));
      } else {
        size_t at = pred.body.size();
        if (at > 0 && pred.body[at - 1].op == Opcode::Split) --at;
        pred.body.insert(pred.body.begin() + at, seq.begin(), seq.end());
        stats.inserted += static_cast<int>(seq.size());
      }
    }
    stats.removed += static_cast<int>(b.phis.size());
    b.phis.clear();
  }
  for (auto& eb : edge_blocks) f.blocks.push_back(std::move(eb));

  // leftover selects become cmov (user selects when zicond=true, plus the
  // exit selectors loop canonicalization introduces)
  for (auto& b : f.blocks)
    for (auto& ins : b.body)
      if (ins.op == Opcode::Select) {
        ins.op = Opcode::Cmov;
        stats.inserted += 1;
        stats.removed += 1;
      }

  if (!cfg.annotations) {
    for (auto& b : f.blocks) {
      auto it = std::remove_if(b.body.begin(), b.body.end(), [](const Instruction& i) {
        return i.op == Opcode::AssumeUniform;
      });
      stats.removed += static_cast<int>(b.body.end() - it);
      b.body.erase(it, b.body.end());
    }
  }
  return stats;
}

NestednessReport check_well_nested(const Function& f, const UniformityMap* u) {
  NestednessReport rep;
  Cfg cfg = build_cfg(f);
  DomTree dom = compute_dom_tree(f, cfg);

  if (u) {
    for (auto& b : f.blocks) {
      if (b.term.op != Opcode::CondBr) continue;
      if (u->branch(b.label) != BranchState::DivergentBranch) continue;
      bool has_split = false;
      for (auto& ins : b.body)
        if (ins.op == Opcode::Split) has_split = true;
      if (!has_split) {
        rep.ok = false;
        rep.problems.push_back("divergent branch in ^" + b.label +
                               " has no adjacent split");
      }
    }
  }

  // path-sensitive token walk over the forward subgraph
  using Stack = std::vector<std::string>;
  std::set<std::pair<int, Stack>> seen;
  int state_budget = 20000;
  std::function<void(int, Stack)> walk = [&](int bi, Stack stack) {
    if (!rep.ok) return;
    if (--state_budget < 0) {
      rep.ok = false;
      rep.problems.push_back("nestedness walk exceeded its state budget");
      return;
    }
    if (!seen.insert({bi, stack}).second) return;
    const Block& b = f.blocks[bi];
    for (auto& ins : b.body) {
      if (ins.op == Opcode::Split) {
        stack.push_back(ins.result);
      } else if (ins.op == Opcode::Join) {
        const std::string& tok = ins.operands[0].name;
        if (!stack.empty() && stack.back() == tok) {
          stack.pop_back();
        } else if (std::find(stack.begin(), stack.end(), tok) != stack.end()) {
          rep.ok = false;
          rep.problems.push_back("join of %" + tok + " in ^" + b.label +
                                 " crosses an open region");
          return;
        }
        // otherwise: token not live on this path, a benign no-op
      }
    }
    if (b.term.op == Opcode::Ret) {
      if (!stack.empty()) {
        rep.ok = false;
        rep.problems.push_back("open split region at return in ^" + b.label);
      }
      return;
    }
    for (int s : cfg.succs[bi]) {
      if (dom.dominates(s, bi)) continue;  // back edge
      walk(s, stack);
    }
  };
  walk(0, {});
  return rep;
}

}  // namespace simtforge
