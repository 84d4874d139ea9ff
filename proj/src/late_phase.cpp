#include "simtforge/late_phase.hpp"

#include <algorithm>
#include <random>
#include <set>

#include "simtforge/cfg.hpp"
#include "simtforge/verifier.hpp"

namespace simtforge {

PerturbResult perturb(Function& f, PerturbMode mode, uint64_t seed) {
  PerturbResult res;
  std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ull + 1);

  switch (mode) {
    case PerturbMode::InvertBranch: {
      std::vector<int> sites;
      for (size_t bi = 0; bi < f.blocks.size(); ++bi)
        if (f.blocks[bi].term.op == Opcode::CondBr) sites.push_back((int)bi);
      if (sites.empty()) return res;
      int bi = sites[rng() % sites.size()];
      Block& b = f.blocks[bi];
      std::string one = f.fresh_value("inv.one");
      Instruction c1;
      c1.op = Opcode::Const;
      c1.result = one;
      c1.operands = {Operand::imm_of(1)};
      std::string neg = f.fresh_value("inv");
      Instruction x;
      x.op = Opcode::Xor;
      x.result = neg;
      x.operands = {Operand::value(b.term.operands[0].name), Operand::value(one)};
      b.body.push_back(c1);
      b.body.push_back(x);
      std::swap(b.term.operands[1], b.term.operands[2]);
      b.term.operands[0] = Operand::value(neg);
      res.applied = true;
      res.site = b.label;
      res.stats.inserted += 2;
      return res;
    }
    case PerturbMode::RematerializePredicate: {
      std::vector<int> sites;
      for (size_t bi = 0; bi < f.blocks.size(); ++bi) {
        const Block& b = f.blocks[bi];
        if (b.term.op == Opcode::CondBr && !b.body.empty() &&
            b.body.back().op == Opcode::Split)
          sites.push_back((int)bi);
      }
      if (sites.empty()) return res;
      int bi = sites[rng() % sites.size()];
      Block& b = f.blocks[bi];
      std::string remat = f.fresh_value("remat");
      Instruction mv;
      mv.op = Opcode::Mov;
      mv.result = remat;
      mv.operands = {Operand::value(b.term.operands[0].name)};
      b.body.push_back(mv);  // lands between the split and the branch
      b.term.operands[0] = Operand::value(remat);
      res.applied = true;
      res.site = b.label;
      res.stats.inserted += 1;
      return res;
    }
    case PerturbMode::ExpandSelect: {
      std::vector<std::pair<int, int>> sites;
      for (size_t bi = 0; bi < f.blocks.size(); ++bi)
        for (size_t k = 0; k < f.blocks[bi].body.size(); ++k)
          if (f.blocks[bi].body[k].op == Opcode::Cmov)
            sites.push_back({(int)bi, (int)k});
      if (sites.empty()) return res;
      auto [bi, k] = sites[rng() % sites.size()];
      Block& b = f.blocks[bi];
      const std::string site_label = b.label;
      Instruction sel = b.body[k];

      std::string then_lbl = f.fresh_label(b.label + ".xt");
      std::string else_lbl = f.fresh_label(b.label + ".xe");
      std::string join_lbl = f.fresh_label(b.label + ".xj");

      Block join;
      join.label = join_lbl;
      join.body.assign(b.body.begin() + k + 1, b.body.end());
      join.term = b.term;

      b.body.erase(b.body.begin() + k, b.body.end());
      b.term = {Opcode::CondBr, "",
                {sel.operands[0], Operand::label(then_lbl), Operand::label(else_lbl)}};

      Block tb, eb;
      tb.label = then_lbl;
      Instruction mt;
      mt.op = Opcode::Mov;
      mt.result = sel.result;
      mt.operands = {sel.operands[1]};
      tb.body.push_back(mt);
      tb.term = {Opcode::Br, "", {Operand::label(join_lbl)}};
      eb.label = else_lbl;
      Instruction me;
      me.op = Opcode::Mov;
      me.result = sel.result;
      me.operands = {sel.operands[2]};
      eb.body.push_back(me);
      eb.term = {Opcode::Br, "", {Operand::label(join_lbl)}};

      f.blocks.insert(f.blocks.begin() + bi + 1,
                      {std::move(tb), std::move(eb), std::move(join)});
      res.applied = true;
      res.site = site_label;
      res.stats.inserted += 5;  // condbr + 2 mov + 2 br
      res.stats.removed += 1;   // the cmov
      return res;
    }
  }
  return res;
}

namespace {

bool pure_movable(Opcode op) {
  switch (op) {
    case Opcode::Const:
    case Opcode::Mov:
    case Opcode::Xor:
    case Opcode::And:
    case Opcode::Or:
    case Opcode::Icmp:
      return true;
    default:
      return false;
  }
}

}  // namespace

PassStats repair_divergence(Function& f, const UniformityMap& u) {
  PassStats stats;

  // (a) + (b): per-split normalization against the block's branch
  for (auto& b : f.blocks) {
    int split_at = -1;
    for (size_t k = 0; k < b.body.size(); ++k)
      if (b.body[k].op == Opcode::Split) split_at = static_cast<int>(k);
    if (split_at < 0 || b.term.op != Opcode::CondBr) continue;
    Instruction& split = b.body[split_at];
    ChainRoot cs = resolve_condition_chain(f, split.operands[0].name);
    ChainRoot cb = resolve_condition_chain(f, b.term.operands[0].name);
    if (cs.resolved && cb.resolved && cs.root == cb.root) {
      bool want_negate = cs.negated != cb.negated;
      if (!want_negate && split.operands[0].name != b.term.operands[0].name) {
        // predicate drift: the branch reads the split's operand again
        b.term.operands[0] = split.operands[0];
      }
      if (split.negate != want_negate) split.negate = want_negate;
    }
    // move the split back-to-back with the branch when only pure condition
    // plumbing sits in between
    if (split_at != static_cast<int>(b.body.size()) - 1) {
      bool movable = true;
      for (size_t k = split_at + 1; k < b.body.size(); ++k)
        if (!pure_movable(b.body[k].op)) movable = false;
      if (movable) {
        Instruction s = b.body[split_at];
        b.body.erase(b.body.begin() + split_at);
        b.body.push_back(s);
      }
    }
  }

  // (c): divergent conditional branches lacking a split get one, with the
  // join at their ipdom
  {
    Cfg cfg = build_cfg(f);
    PostDomTree pd = compute_postdom_tree(f, cfg);
    std::vector<std::pair<int, int>> missing;
    for (size_t bi = 0; bi < f.blocks.size(); ++bi) {
      const Block& b = f.blocks[bi];
      if (b.term.op != Opcode::CondBr) continue;
      if (u.branch(b.label) != BranchState::DivergentBranch) continue;
      bool has_split = false;
      for (auto& ins : b.body)
        if (ins.op == Opcode::Split) has_split = true;
      if (has_split) continue;
      int ip = pd.ipdom[bi];
      if (ip < 0) continue;
      missing.push_back({static_cast<int>(bi), ip});
    }
    for (auto& [bi, ip] : missing) {
      Block& b = f.blocks[bi];
      std::string tok = f.fresh_value("tok.fix");
      Instruction split;
      split.op = Opcode::Split;
      split.result = tok;
      split.operands = {Operand::value(b.term.operands[0].name)};
      b.body.push_back(split);
      Instruction join;
      join.op = Opcode::Join;
      join.operands = {Operand::value(tok)};
      Block& ipb = f.blocks[ip];
      ipb.body.insert(ipb.body.begin(), join);
      stats.inserted += 2;
    }
  }
  return stats;
}

PassStats repair_module(Module& m) {
  PassStats stats;
  ArgAnalysisResult ar = analyze_function_arguments(m, /*annotations=*/true);
  for (auto& f : m.functions) {
    UniformityMap u = compute_lowered_uniformity(f, m, ar.summaries);
    PassStats s = repair_divergence(f, u);
    stats.inserted += s.inserted;
    stats.removed += s.removed;
  }
  return stats;
}

}  // namespace simtforge
