#include "simtforge/normalize.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "simtforge/cfg.hpp"

namespace simtforge {

namespace {

// Known-constant evaluation over single-def chains (const, copies, bitwise
// ops, icmp). Enough to fold selects whose condition is statically fixed.
struct ConstEval {
  std::unordered_map<std::string, const Instruction*> defs;
  std::unordered_map<std::string, std::pair<bool, uint32_t>> memo;

  explicit ConstEval(const Function& f) {
    std::unordered_map<std::string, int> count;
    for_each_instruction(f, [&](const Instruction& i) {
      if (i.has_result()) {
        count[i.result] += 1;
        defs[i.result] = &i;
      }
    });
    for (auto& [n, c] : count)
      if (c > 1) defs.erase(n);
  }

  bool known(const std::string& v, uint32_t& out) {
    auto it = memo.find(v);
    if (it != memo.end()) {
      out = it->second.second;
      return it->second.first;
    }
    memo[v] = {false, 0};  // cycle guard
    bool ok = false;
    uint32_t r = 0;
    auto d = defs.find(v);
    if (d != defs.end()) {
      const Instruction& i = *d->second;
      uint32_t a, b;
      switch (i.op) {
        case Opcode::Const:
          r = static_cast<uint32_t>(i.operands[0].imm);
          ok = true;
          break;
        case Opcode::Mov:
          ok = known(i.operands[0].name, r);
          break;
        case Opcode::And:
        case Opcode::Or:
        case Opcode::Xor:
          if (known(i.operands[0].name, a) && known(i.operands[1].name, b)) {
            r = i.op == Opcode::And ? (a & b) : i.op == Opcode::Or ? (a | b) : (a ^ b);
            ok = true;
          }
          break;
        case Opcode::Icmp:
          if (known(i.operands[0].name, a) && known(i.operands[1].name, b)) {
            int32_t sa = static_cast<int32_t>(a), sb = static_cast<int32_t>(b);
            switch (i.icmp) {
              case IcmpPred::Eq: r = a == b; break;
              case IcmpPred::Ne: r = a != b; break;
              case IcmpPred::Slt: r = sa < sb; break;
              case IcmpPred::Sle: r = sa <= sb; break;
              case IcmpPred::Sgt: r = sa > sb; break;
              case IcmpPred::Sge: r = sa >= sb; break;
              case IcmpPred::Ult: r = a < b; break;
            }
            ok = true;
          }
          break;
        default:
          break;
      }
    }
    memo[v] = {ok, r};
    out = r;
    return ok;
  }
};

void fixup_successor_phis(Function& f, const Instruction& term,
                          const std::string& old_pred, const std::string& new_pred) {
  for (auto& s : successors(term)) {
    Block* succ = f.block(s);
    for (auto& phi : succ->phis) phi_set_incoming_label(phi, old_pred, new_pred);
  }
}

}  // namespace

PassStats normalize_selects(Function& f, const UniformityMap& u,
                            const PipelineConfig& cfg) {
  (void)u;
  PassStats stats;
  bool again = true;
  while (again) {
    again = false;
    ConstEval ce(f);
    for (size_t bi = 0; bi < f.blocks.size() && !again; ++bi) {
      Block& b = f.blocks[bi];
      for (size_t k = 0; k < b.body.size(); ++k) {
        if (b.body[k].op != Opcode::Select) continue;
        Instruction sel = b.body[k];
        uint32_t cv;
        if (ce.known(sel.operands[0].name, cv)) {
          const std::string arm = cv ? sel.operands[1].name : sel.operands[2].name;
          b.body.erase(b.body.begin() + k);
          replace_uses(f, sel.result, arm);
          stats.removed += 1;
          again = true;
          break;
        }
        if (cfg.zicond) continue;  // lowered to cmov at demotion

        std::string then_lbl = f.fresh_label(b.label + ".then");
        std::string else_lbl = f.fresh_label(b.label + ".else");
        std::string join_lbl = f.fresh_label(b.label + ".join");

        Block join;
        join.label = join_lbl;
        Instruction phi;
        phi.op = Opcode::Phi;
        phi.result = sel.result;
        phi.operands = {Operand::value(sel.operands[1].name), Operand::label(then_lbl),
                        Operand::value(sel.operands[2].name), Operand::label(else_lbl)};
        join.phis.push_back(phi);
        join.body.assign(b.body.begin() + k + 1, b.body.end());
        join.term = b.term;

        fixup_successor_phis(f, b.term, b.label, join_lbl);

        b.body.erase(b.body.begin() + k, b.body.end());
        Instruction cond;
        cond.op = Opcode::CondBr;
        cond.operands = {Operand::value(sel.operands[0].name), Operand::label(then_lbl),
                         Operand::label(else_lbl)};
        b.term = cond;

        Block then_b, else_b;
        then_b.label = then_lbl;
        then_b.term = {Opcode::Br, "", {Operand::label(join_lbl)}};
        else_b.label = else_lbl;
        else_b.term = {Opcode::Br, "", {Operand::label(join_lbl)}};

        f.blocks.insert(f.blocks.begin() + bi + 1,
                        {std::move(then_b), std::move(else_b), std::move(join)});
        stats.inserted += 4;  // condbr + 2 br + phi
        stats.removed += 1;   // the select
        again = true;
        break;
      }
    }
  }
  return stats;
}

PassStats simplify_cfg(Function& f) {
  PassStats stats;

  // 1. drop blocks unreachable from entry
  {
    Cfg cfg = build_cfg(f);
    auto seen = reachable_from(cfg, 0);
    seen[0] = true;
    std::set<std::string> kept;
    for (size_t i = 0; i < f.blocks.size(); ++i)
      if (seen[i]) kept.insert(f.blocks[i].label);
    std::vector<Block> nb;
    for (size_t i = 0; i < f.blocks.size(); ++i) {
      if (!seen[i]) {
        stats.removed += static_cast<int>(f.blocks[i].phis.size() +
                                          f.blocks[i].body.size() + 1);
        continue;
      }
      nb.push_back(std::move(f.blocks[i]));
    }
    f.blocks = std::move(nb);
    // drop phi incomings from removed predecessors
    for (auto& b : f.blocks)
      for (auto& phi : b.phis)
        for (size_t i = 0; i + 1 < phi.operands.size();) {
          if (!kept.count(phi.operands[i + 1].name)) {
            phi.operands.erase(phi.operands.begin() + i, phi.operands.begin() + i + 2);
          } else {
            i += 2;
          }
        }
  }

  // 2. fold single-incoming phis
  {
    bool again = true;
    while (again) {
      again = false;
      for (auto& b : f.blocks) {
        for (size_t pi = 0; pi < b.phis.size(); ++pi) {
          if (b.phis[pi].operands.size() != 2) continue;
          std::string from = b.phis[pi].operands[0].name;
          std::string name = b.phis[pi].result;
          b.phis.erase(b.phis.begin() + pi);
          replace_uses(f, name, from);
          stats.removed += 1;
          again = true;
          break;
        }
        if (again) break;
      }
    }
  }

  // 3. merge every ret into one exit block
  {
    std::vector<std::string> ret_blocks;
    bool has_value = false;
    for (auto& b : f.blocks)
      if (b.term.op == Opcode::Ret) {
        ret_blocks.push_back(b.label);
        if (!b.term.operands.empty()) has_value = true;
      }
    if (ret_blocks.size() > 1) {
      std::string exit_lbl = f.fresh_label("exit");
      Block exit;
      exit.label = exit_lbl;
      if (has_value) {
        Instruction phi;
        phi.op = Opcode::Phi;
        phi.result = f.fresh_value("ret.merged");
        for (auto& rb : ret_blocks) {
          Block* r = f.block(rb);
          phi.operands.push_back(Operand::value(r->term.operands[0].name));
          phi.operands.push_back(Operand::label(rb));
        }
        exit.phis.push_back(phi);
        exit.term = {Opcode::Ret, "", {Operand::value(phi.result)}};
        stats.inserted += 1;  // the phi
      } else {
        exit.term = {Opcode::Ret, "", {}};
      }
      stats.inserted += 1;  // the new ret
      for (auto& rb : ret_blocks) {
        Block* r = f.block(rb);
        r->term = {Opcode::Br, "", {Operand::label(exit_lbl)}};
        // a br replaces each old ret: counts stay balanced
        stats.inserted += 1;
        stats.removed += 1;
      }
      f.blocks.push_back(std::move(exit));
    }
  }

  // 4. merge single-pred/single-succ pairs (loop headers keep their label)
  {
    bool again = true;
    while (again) {
      again = false;
      Cfg cfg = build_cfg(f);
      DomTree dom = compute_dom_tree(f, cfg);
      std::set<int> headers;
      for (size_t n = 0; n < cfg.size(); ++n)
        for (int s : cfg.succs[n])
          if (dom.dominates(s, static_cast<int>(n))) headers.insert(s);
      for (size_t ai = 0; ai < f.blocks.size(); ++ai) {
        Block& a = f.blocks[ai];
        if (a.term.op != Opcode::Br) continue;
        int bix = cfg.of(a.term.operands[0].name);
        if (bix < 0 || bix == static_cast<int>(ai) || bix == 0) continue;
        if (cfg.preds[bix].size() != 1) continue;
        if (headers.count(bix)) continue;
        Block& b = f.blocks[bix];
        // fold b's phis (single predecessor)
        for (auto& phi : b.phis) {
          replace_uses(f, phi.result, phi.operands[0].name);
          stats.removed += 1;
        }
        b.phis.clear();
        for (auto& ins : b.body) a.body.push_back(ins);
        std::string b_label = b.label;
        a.term = b.term;
        stats.removed += 1;  // a's br disappears
        fixup_successor_phis(f, a.term, b_label, a.label);
        f.blocks.erase(f.blocks.begin() + bix);
        again = true;
        break;
      }
    }
  }
  return stats;
}

namespace {

struct LoopShape {
  bool canonical = false;
  bool needs_preheader = false;
};

LoopShape classify_loop(const Function& f, const Cfg& cfg, const Loop& loop) {
  LoopShape s;
  if (loop.preheader < 0) {
    s.needs_preheader = true;
    return s;
  }
  if (loop.latches.size() != 1) return s;
  int latch = loop.latches[0];
  const Instruction& t = f.blocks[latch].term;
  if (t.op != Opcode::CondBr) return s;
  if (cfg.of(t.operands[1].name) != loop.header) return s;
  int exit_ix = cfg.of(t.operands[2].name);
  if (loop.exit_edges.size() != 1 || loop.exit_edges[0].first != latch ||
      loop.exit_edges[0].second != exit_ix)
    return s;
  if (cfg.preds[exit_ix].size() != 1) return s;
  s.canonical = true;
  return s;
}

void insert_preheader(Function& f, const Cfg& cfg, const Loop& loop, PassStats& stats) {
  int header = loop.header;
  std::string h_label = f.blocks[header].label;
  std::string p_label = f.fresh_label(h_label + ".pre");

  std::vector<int> external;
  for (int p : cfg.preds[header])
    if (!loop.contains(p)) external.push_back(p);

  Block pre;
  pre.label = p_label;
  pre.term = {Opcode::Br, "", {Operand::label(h_label)}};
  stats.inserted += 1;

  // split each header phi's external incomings into the preheader
  for (auto& phi : f.blocks[header].phis) {
    std::vector<std::pair<std::string, std::string>> ext;  // (value, label)
    for (size_t i = 0; i + 1 < phi.operands.size(); i += 2) {
      int pix = cfg.of(phi.operands[i + 1].name);
      if (pix >= 0 && !loop.contains(pix))
        ext.push_back({phi.operands[i].name, phi.operands[i + 1].name});
    }
    if (ext.empty()) continue;
    std::string carried;
    if (ext.size() == 1) {
      carried = ext[0].first;
    } else {
      Instruction np;
      np.op = Opcode::Phi;
      np.result = f.fresh_value(phi.result + ".pre");
      for (auto& [v, l] : ext) {
        np.operands.push_back(Operand::value(v));
        np.operands.push_back(Operand::label(l));
      }
      pre.phis.push_back(np);
      stats.inserted += 1;
      carried = np.result;
    }
    for (auto& [v, l] : ext) phi_remove_incoming(phi, l);
    phi.operands.push_back(Operand::value(carried));
    phi.operands.push_back(Operand::label(p_label));
  }

  for (int p : external) retarget(f.blocks[p].term, h_label, p_label);

  if (external.empty()) {
    // the header is the function entry: the preheader becomes the new entry
    f.blocks.insert(f.blocks.begin(), std::move(pre));
  } else {
    f.blocks.insert(f.blocks.begin() + header, std::move(pre));
  }
}

// Rewrites a non-canonical loop: all latch and exit edges funnel through one
// new latch carrying a continue predicate and an exit selector; a dedicated
// exit block dispatches to the original targets.
void funnel_loop(Function& f, const Cfg& cfg, const DomTree& dom, const Loop& loop,
                 PassStats& stats) {
  const std::string h_label = f.blocks[loop.header].label;
  std::set<int> body(loop.body.begin(), loop.body.end());

  // distinct exit targets, in exit-edge discovery order
  std::vector<int> exit_targets;
  for (auto& [b, e] : loop.exit_edges)
    if (std::find(exit_targets.begin(), exit_targets.end(), e) == exit_targets.end())
      exit_targets.push_back(e);
  int k = static_cast<int>(exit_targets.size());
  auto ecode_of = [&](int target) {
    for (int i = 0; i < k; ++i)
      if (exit_targets[i] == target) return i;
    return 0;
  };

  // funnel predecessors: latches and exit-edge sources, ascending
  std::set<int> funnel_set(loop.latches.begin(), loop.latches.end());
  for (auto& [b, e] : loop.exit_edges) funnel_set.insert(b);
  std::vector<int> funnel(funnel_set.begin(), funnel_set.end());

  std::string latch_lbl = f.fresh_label(h_label + ".latch");
  std::string exit_lbl = f.fresh_label(h_label + ".exit");

  // shared constants in the entry block
  Block& entry = f.blocks[0];
  auto add_const = [&](const std::string& base, int64_t v) {
    Instruction c;
    c.op = Opcode::Const;
    c.result = f.fresh_value(base);
    c.operands.push_back(Operand::imm_of(v));
    entry.body.push_back(c);
    stats.inserted += 1;
    return c.result;
  };
  std::string c_zero = add_const(h_label + ".f", 0);
  std::string c_one = add_const(h_label + ".t", 1);
  std::vector<std::string> c_codes;
  if (k >= 2)
    for (int i = 0; i < k; ++i)
      c_codes.push_back(add_const(h_label + ".ec" + std::to_string(i), i));

  // per-predecessor live/ecode values, then terminator rewiring
  struct FunnelIn {
    int block;
    std::string live;
    std::string ecode;
  };
  std::vector<FunnelIn> inputs;
  for (int b : funnel) {
    Block& blk = f.blocks[b];
    Instruction& t = blk.term;
    FunnelIn in{b, c_one, c_zero};
    auto kind_of = [&](const std::string& target) {
      int ix = cfg.of(target);
      if (ix == loop.header) return 0;      // latch edge
      if (body.count(ix)) return 1;         // stays inside
      return 2;                             // exit edge
    };
    if (t.op == Opcode::Br) {
      int kind = kind_of(t.operands[0].name);
      if (kind == 0) {
        in.live = c_one;
      } else {
        in.live = c_zero;
        if (k >= 2) in.ecode = c_codes[ecode_of(cfg.of(t.operands[0].name))];
      }
      t.operands[0] = Operand::label(latch_lbl);
    } else {  // CondBr
      std::string cond = t.operands[0].name;
      int k1 = kind_of(t.operands[1].name);
      int k2 = kind_of(t.operands[2].name);
      int t1 = cfg.of(t.operands[1].name);
      int t2 = cfg.of(t.operands[2].name);
      bool rw1 = k1 != 1, rw2 = k2 != 1;
      if (rw1 && rw2) {
        if (k1 == 0 && k2 == 0) {
          in.live = c_one;
        } else if (k1 == 0) {
          in.live = cond;
          if (k >= 2) in.ecode = c_codes[ecode_of(t2)];
        } else if (k2 == 0) {
          Instruction neg;
          neg.op = Opcode::Xor;
          neg.result = f.fresh_value(h_label + ".not");
          neg.operands = {Operand::value(cond), Operand::value(c_one)};
          blk.body.push_back(neg);
          stats.inserted += 1;
          in.live = neg.result;
          if (k >= 2) in.ecode = c_codes[ecode_of(t1)];
        } else {
          in.live = c_zero;
          if (k >= 2) {
            if (t1 == t2) {
              in.ecode = c_codes[ecode_of(t1)];
            } else {
              Instruction sel;
              sel.op = Opcode::Select;
              sel.result = f.fresh_value(h_label + ".sel");
              sel.operands = {Operand::value(cond),
                              Operand::value(c_codes[ecode_of(t1)]),
                              Operand::value(c_codes[ecode_of(t2)])};
              blk.body.push_back(sel);
              stats.inserted += 1;
              in.ecode = sel.result;
            }
          }
        }
        Instruction br;
        br.op = Opcode::Br;
        br.operands.push_back(Operand::label(latch_lbl));
        blk.term = br;
        stats.inserted += 1;
        stats.removed += 1;
      } else {
        // exactly one side rewires
        int rw_kind = rw1 ? k1 : k2;
        int rw_target = rw1 ? t1 : t2;
        if (rw_kind == 0) {
          in.live = c_one;
        } else {
          in.live = c_zero;
          if (k >= 2) in.ecode = c_codes[ecode_of(rw_target)];
        }
        t.operands[rw1 ? 1 : 2] = Operand::label(latch_lbl);
      }
    }
    inputs.push_back(in);
  }

  // the new latch
  Block latch;
  latch.label = latch_lbl;
  auto mk_phi = [&](const std::string& base,
                    const std::vector<std::pair<int, std::string>>& incoming) {
    Instruction phi;
    phi.op = Opcode::Phi;
    phi.result = f.fresh_value(base);
    for (auto& [b, v] : incoming) {
      phi.operands.push_back(Operand::value(v));
      phi.operands.push_back(Operand::label(f.blocks[b].label));
    }
    latch.phis.push_back(phi);
    stats.inserted += 1;
    return phi.result;
  };

  std::vector<std::pair<int, std::string>> live_in, ecode_in;
  for (auto& in : inputs) {
    live_in.push_back({in.block, in.live});
    ecode_in.push_back({in.block, in.ecode});
  }
  std::string live = mk_phi(h_label + ".live", live_in);
  std::string ecode;
  if (k >= 2) ecode = mk_phi(h_label + ".ecode", ecode_in);

  // carry header phis through the new latch
  std::set<int> latch_set(loop.latches.begin(), loop.latches.end());
  for (auto& phi : f.blocks[loop.header].phis) {
    std::vector<std::pair<int, std::string>> carry;
    for (auto& in : inputs) {
      const Operand* v = latch_set.count(in.block)
                             ? phi_incoming(phi, f.blocks[in.block].label)
                             : nullptr;
      carry.push_back({in.block, v ? v->name : c_zero});
    }
    std::string carried = mk_phi(phi.result + ".carry", carry);
    for (int l : loop.latches) phi_remove_incoming(phi, f.blocks[l].label);
    phi.operands.push_back(Operand::value(carried));
    phi.operands.push_back(Operand::label(latch_lbl));
  }

  latch.term = {Opcode::CondBr, "",
                {Operand::value(live), Operand::label(h_label), Operand::label(exit_lbl)}};
  stats.inserted += 1;

  // the dedicated exit block, plus a dispatch chain when several targets exist
  std::vector<Block> new_blocks;
  std::unordered_map<int, std::string> dispatch_pred;  // exit target -> pred label
  {
    Block ex;
    ex.label = exit_lbl;
    if (k == 1) {
      ex.term = {Opcode::Br, "", {Operand::label(f.blocks[exit_targets[0]].label)}};
      stats.inserted += 1;
      dispatch_pred[exit_targets[0]] = exit_lbl;
      new_blocks.push_back(std::move(ex));
    } else {
      std::vector<std::string> chain_labels{exit_lbl};
      for (int i = 1; i + 1 < k; ++i)
        chain_labels.push_back(f.fresh_label(h_label + ".disp" + std::to_string(i)));
      for (int i = 0; i + 1 < k; ++i) {
        Block cb;
        cb.label = chain_labels[i];
        Instruction cmp;
        cmp.op = Opcode::Icmp;
        cmp.icmp = IcmpPred::Eq;
        cmp.result = f.fresh_value(h_label + ".is" + std::to_string(i));
        cmp.operands = {Operand::value(ecode), Operand::value(c_codes[i])};
        cb.body.push_back(cmp);
        std::string on_false = (i + 2 < k) ? chain_labels[i + 1]
                                           : f.blocks[exit_targets[k - 1]].label;
        cb.term = {Opcode::CondBr, "",
                   {Operand::value(cmp.result),
                    Operand::label(f.blocks[exit_targets[i]].label),
                    Operand::label(on_false)}};
        stats.inserted += 2;
        dispatch_pred[exit_targets[i]] = chain_labels[i];
        if (i + 2 >= k) dispatch_pred[exit_targets[k - 1]] = chain_labels[i];
        new_blocks.push_back(std::move(cb));
      }
    }
  }

  // route exit-target phi incomings through the latch
  for (int e : exit_targets) {
    Block& eb = f.blocks[e];
    for (auto& phi : eb.phis) {
      std::vector<std::pair<int, std::string>> vals;
      bool any = false;
      for (auto& in : inputs) {
        const Operand* v = phi_incoming(phi, f.blocks[in.block].label);
        bool is_exit_edge = false;
        for (auto& [b2, e2] : loop.exit_edges)
          if (b2 == in.block && e2 == e) is_exit_edge = true;
        if (v && is_exit_edge) {
          vals.push_back({in.block, v->name});
          any = true;
        } else {
          vals.push_back({in.block, c_zero});
        }
      }
      if (!any) continue;
      std::string routed = mk_phi(phi.result + ".out", vals);
      for (auto& [b2, e2] : loop.exit_edges)
        if (e2 == e) phi_remove_incoming(phi, f.blocks[b2].label);
      phi.operands.push_back(Operand::value(routed));
      phi.operands.push_back(Operand::label(dispatch_pred[e]));
    }
  }

  // loop-closed SSA: defs inside the loop used beyond it flow through the latch
  {
    std::set<std::string> inside_labels;
    for (int b : loop.body) inside_labels.insert(f.blocks[b].label);
    inside_labels.insert(latch_lbl);
    for (auto& nb : new_blocks) inside_labels.insert(nb.label);

    struct DefInfo {
      std::string name;
      int block;
    };
    std::vector<DefInfo> defs;
    for (int b : loop.body) {
      for_each_instruction(f.blocks[b], [&](const Instruction& ins) {
        if (ins.has_result()) defs.push_back({ins.result, b});
      });
    }
    for (auto& d : defs) {
      bool used_outside = false;
      for (auto& b : f.blocks) {
        if (inside_labels.count(b.label)) continue;
        for_each_instruction(b, [&](const Instruction& ins) {
          for (auto& o : ins.operands)
            if (o.kind == Operand::Kind::Value && o.name == d.name) used_outside = true;
        });
        if (used_outside) break;
      }
      if (!used_outside) continue;
      std::vector<std::pair<int, std::string>> vals;
      for (auto& in : inputs)
        vals.push_back({in.block, dom.dominates(d.block, in.block) ? d.name : c_zero});
      std::string closed = mk_phi(d.name + ".lc", vals);
      for (auto& b : f.blocks) {
        if (inside_labels.count(b.label)) continue;
        auto fix = [&](Instruction& ins) {
          for (auto& o : ins.operands)
            if (o.kind == Operand::Kind::Value && o.name == d.name) o.name = closed;
        };
        for (auto& p : b.phis) fix(p);
        for (auto& i : b.body) fix(i);
        fix(b.term);
      }
    }
  }

  // place the new blocks after the last body block
  int insert_at = 0;
  for (int b : loop.body) insert_at = std::max(insert_at, b);
  f.blocks.insert(f.blocks.begin() + insert_at + 1, std::move(latch));
  f.blocks.insert(f.blocks.begin() + insert_at + 2,
                  std::make_move_iterator(new_blocks.begin()),
                  std::make_move_iterator(new_blocks.end()));
}

}  // namespace

PassStats canonicalize_loops(Function& f) {
  PassStats stats;
  for (int guard = 0; guard < 1000; ++guard) {
    Cfg cfg = build_cfg(f);
    DomTree dom = compute_dom_tree(f, cfg);
    LoopForest forest = build_loop_forest(f, cfg, dom);
    bool did = false;
    for (auto& loop : forest.loops) {
      LoopShape shape = classify_loop(f, cfg, loop);
      if (shape.canonical) continue;
      if (shape.needs_preheader)
        insert_preheader(f, cfg, loop, stats);
      else
        funnel_loop(f, cfg, dom, loop, stats);
      did = true;
      break;  // structures shifted: recompute
    }
    if (!did) return stats;
  }
  throw PassError("loops", "loop canonicalization did not converge");
}

namespace {

// Rewrites every external use of the values defined in `origin` (and its
// per-predecessor copies) by walking reaching definitions, inserting merge
// phis where paths join. `copies` maps a block label to the local name of
// the value in that block.
class SsaRepair {
 public:
  SsaRepair(Function& f, PassStats& stats) : f_(f), stats_(stats) {}

  void repair(const std::string& value,
              const std::unordered_map<std::string, std::string>& copies) {
    value_ = value;
    copies_ = &copies;
    memo_.clear();
    Cfg cfg = build_cfg(f_);
    for (auto& b : f_.blocks) {
      if (copies.count(b.label)) continue;
      // index-based: read_at_top may append merge phis to this very block
      for (size_t pi = 0; pi < b.phis.size(); ++pi)
        for (size_t i = 0; i + 1 < b.phis[pi].operands.size(); i += 2)
          if (b.phis[pi].operands[i].kind == Operand::Kind::Value &&
              b.phis[pi].operands[i].name == value_) {
            std::string r = read_at_end(cfg, b.phis[pi].operands[i + 1].name);
            b.phis[pi].operands[i].name = r;
          }
      auto fix = [&](Instruction& ins) {
        for (auto& o : ins.operands)
          if (o.kind == Operand::Kind::Value && o.name == value_)
            o.name = read_at_top(cfg, b.label);
      };
      for (auto& i : b.body) fix(i);
      fix(b.term);
    }
  }

 private:
  std::string read_at_end(const Cfg& cfg, const std::string& block) {
    auto it = copies_->find(block);
    if (it != copies_->end()) return it->second;
    return read_at_top(cfg, block);
  }

  std::string read_at_top(const Cfg& cfg, const std::string& block) {
    auto m = memo_.find(block);
    if (m != memo_.end()) return m->second;
    int bi = cfg.of(block);
    if (bi == 0 || cfg.preds[bi].empty()) {
      // no reaching copy on this path; the value is dead here but a phi
      // operand still needs a definition
      return undef_surrogate();
    }
    if (cfg.preds[bi].size() == 1) {
      std::string r = read_at_end(cfg, cfg.labels[cfg.preds[bi][0]]);
      memo_[block] = r;
      return r;
    }
    std::string fresh = f_.fresh_value(value_ + ".m");
    memo_[block] = fresh;  // registered first: cycles resolve to this phi
    Instruction phi;
    phi.op = Opcode::Phi;
    phi.result = fresh;
    for (int p : cfg.preds[bi]) {
      phi.operands.push_back(Operand::value(read_at_end(cfg, cfg.labels[p])));
      phi.operands.push_back(Operand::label(cfg.labels[p]));
    }
    f_.block(block)->phis.push_back(std::move(phi));
    stats_.inserted += 1;
    return fresh;
  }

  std::string undef_surrogate() {
    if (undef_.empty()) {
      Instruction c;
      c.op = Opcode::Const;
      c.result = f_.fresh_value(value_ + ".undef");
      c.operands.push_back(Operand::imm_of(0));
      f_.blocks[0].body.insert(f_.blocks[0].body.begin(), c);
      stats_.inserted += 1;
      undef_ = c.result;
    }
    return undef_;
  }

  Function& f_;
  PassStats& stats_;
  std::string value_;
  const std::unordered_map<std::string, std::string>* copies_ = nullptr;
  std::unordered_map<std::string, std::string> memo_;
  std::string undef_;
};

}  // namespace

PassStats structurize(Function& f) {
  PassStats stats;
  const int budget = 64;
  int cloned = 0;
  for (;;) {
    // re-cloning can orphan earlier copies; dead blocks never reach analysis
    {
      Cfg pre = build_cfg(f);
      auto seen = reachable_from(pre, 0);
      seen[0] = true;
      std::vector<Block> kept;
      std::set<std::string> kept_labels;
      for (size_t i = 0; i < f.blocks.size(); ++i)
        if (seen[i]) {
          kept_labels.insert(f.blocks[i].label);
          kept.push_back(std::move(f.blocks[i]));
        } else {
          stats.removed += static_cast<int>(f.blocks[i].phis.size() +
                                            f.blocks[i].body.size() + 1);
        }
      f.blocks = std::move(kept);
      for (auto& b : f.blocks)
        for (auto& phi : b.phis)
          for (size_t i = 0; i + 1 < phi.operands.size();) {
            if (!kept_labels.count(phi.operands[i + 1].name))
              phi.operands.erase(phi.operands.begin() + i,
                                 phi.operands.begin() + i + 2);
            else
              i += 2;
          }
    }
    Cfg cfg = build_cfg(f);
    DomTree dom = compute_dom_tree(f, cfg);
    Reducibility red = check_reducible(f, cfg, dom);
    if (red.reducible) return stats;

    auto [u, v] = red.witness.front();
    // the retreating edge closes a cycle in the forward subgraph: v ->* u -> v
    std::vector<std::vector<int>> fwd(cfg.size());
    for (size_t n = 0; n < cfg.size(); ++n)
      for (int s : cfg.succs[n])
        if (!dom.dominates(s, static_cast<int>(n))) fwd[n].push_back(s);
    std::vector<int> parent(cfg.size(), -1);
    std::vector<int> queue{v};
    parent[v] = v;
    for (size_t qi = 0; qi < queue.size(); ++qi) {
      int x = queue[qi];
      if (x == u) break;
      for (int s : fwd[x])
        if (parent[s] < 0) {
          parent[s] = x;
          queue.push_back(s);
        }
    }
    if (parent[u] < 0)
      throw StructurizeError("witness edge does not close a forward cycle");
    std::set<int> cycle;
    for (int x = u; x != v; x = parent[x]) cycle.insert(x);
    cycle.insert(v);

    std::vector<int> entries;
    for (int c : cycle)
      for (int p : cfg.preds[c])
        if (!cycle.count(p)) {
          entries.push_back(c);
          break;
        }
    if (entries.empty())
      throw StructurizeError("irreducible cycle without an entry block");
    int target = *std::min_element(entries.begin(), entries.end(), [&](int a, int b) {
      return dom.rpo_num[a] < dom.rpo_num[b];
    });

    std::vector<int> external;
    for (int p : cfg.preds[target])
      if (!cycle.count(p)) external.push_back(p);

    const Block snapshot = f.blocks[target];
    const std::string t_label = snapshot.label;

    // per-value copy table for the SSA repair: block label -> local name
    std::unordered_map<std::string, std::unordered_map<std::string, std::string>> copies;
    for_each_instruction(snapshot, [&](const Instruction& ins) {
      if (ins.has_result()) copies[ins.result][t_label] = ins.result;
    });

    std::vector<Block> clones;
    for (int p : external) {
      if (++cloned > budget)
        throw StructurizeError("clone budget of " + std::to_string(budget) +
                               " blocks exhausted");
      const std::string p_label = f.blocks[p].label;
      std::string c_label = f.fresh_label(t_label + ".dup");

      std::unordered_map<std::string, std::string> rename;
      for_each_instruction(snapshot, [&](const Instruction& ins) {
        if (ins.has_result()) {
          rename[ins.result] = f.fresh_value(ins.result + ".dup");
          copies[ins.result][c_label] = rename[ins.result];
        }
      });
      Block clone = clone_block(snapshot, c_label, rename);
      // the clone serves exactly one predecessor
      for (auto& phi : clone.phis) {
        const Operand* in = phi_incoming(phi, p_label);
        std::string keep = in ? in->name : "";
        std::string result = phi.result;
        phi.operands.clear();
        phi.operands.push_back(Operand::value(keep));
        phi.operands.push_back(Operand::label(p_label));
        phi.result = result;
      }
      stats.inserted += static_cast<int>(clone.phis.size() + clone.body.size() + 1);

      retarget(f.blocks[p].term, t_label, c_label);
      // successors gain the clone as a predecessor, mirroring the original's
      // incoming values through the rename
      for (auto& s : successors(clone.term)) {
        Block* succ = f.block(s);
        if (!succ) continue;
        for (auto& phi : succ->phis) {
          const Operand* in = phi_incoming(phi, t_label);
          if (!in) continue;
          std::string w = in->name;
          auto rn = rename.find(w);
          phi.operands.push_back(Operand::value(rn == rename.end() ? w : rn->second));
          phi.operands.push_back(Operand::label(c_label));
        }
      }
      clones.push_back(std::move(clone));
    }

    // the original keeps only its in-cycle predecessors
    {
      Block* orig = f.block(t_label);
      for (int p : external)
        for (auto& phi : orig->phis) phi_remove_incoming(phi, f.blocks[p].label);
    }

    int at = cfg.of(t_label);
    f.blocks.insert(f.blocks.begin() + at + 1, std::make_move_iterator(clones.begin()),
                    std::make_move_iterator(clones.end()));

    SsaRepair repair(f, stats);
    for (auto& [value, table] : copies) repair.repair(value, table);
  }
}

}  // namespace simtforge
