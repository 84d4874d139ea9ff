#include "simtforge/verifier.hpp"

#include <algorithm>
#include <functional>
#include <unordered_map>
#include <unordered_set>

namespace simtforge {

const char* violation_kind_name(ViolationKind k) {
  switch (k) {
    case ViolationKind::DuplicateFunction: return "DuplicateFunction";
    case ViolationKind::KernelCount: return "KernelCount";
    case ViolationKind::EntryPhi: return "EntryPhi";
    case ViolationKind::DuplicateLabel: return "DuplicateLabel";
    case ViolationKind::BadTerminator: return "BadTerminator";
    case ViolationKind::UnknownLabel: return "UnknownLabel";
    case ViolationKind::PhiEdgeMismatch: return "PhiEdgeMismatch";
    case ViolationKind::MultipleDefinition: return "MultipleDefinition";
    case ViolationKind::UndefinedUse: return "UndefinedUse";
    case ViolationKind::TypeMismatch: return "TypeMismatch";
    case ViolationKind::StageViolation: return "StageViolation";
    case ViolationKind::RetMismatch: return "RetMismatch";
    case ViolationKind::BadCall: return "BadCall";
    case ViolationKind::RecursionFromKernel: return "RecursionFromKernel";
    case ViolationKind::SplitNotAdjacent: return "SplitNotAdjacent";
    case ViolationKind::SplitBranchMismatch: return "SplitBranchMismatch";
  }
  return "?";
}

std::string Violation::str() const {
  std::string s = violation_kind_name(kind);
  if (!function.empty()) s += " @" + function;
  if (!block.empty()) s += " ^" + block;
  if (!message.empty()) s += ": " + message;
  return s;
}

namespace {

constexpr TypeMask kMaskI32{true, false, false};
constexpr TypeMask kMaskI1{false, true, false};
constexpr TypeMask kMaskAddr{false, false, true};
constexpr TypeMask kMaskAll{true, true, true};

TypeMask intersect(TypeMask a, TypeMask b) {
  return {a.i32 && b.i32, a.i1 && b.i1, a.addr && b.addr};
}

TypeMask mask_of_param(ValueType t) {
  switch (t) {
    case ValueType::I32: return kMaskI32;
    case ValueType::I1: return kMaskI1;
    case ValueType::Addr: return kMaskAddr;
  }
  return kMaskI32;
}

TypeMask mask_of_literal(int64_t v) {
  // Literals read as i32 or as a word address; only 0/1 also read as i1.
  return {true, v == 0 || v == 1, true};
}

struct FnIndex {
  std::unordered_map<std::string, int> block_of;
  std::vector<std::vector<int>> succs, preds;
};

FnIndex build_index(const Function& f) {
  FnIndex ix;
  for (size_t i = 0; i < f.blocks.size(); ++i)
    ix.block_of[f.blocks[i].label] = static_cast<int>(i);
  ix.succs.resize(f.blocks.size());
  ix.preds.resize(f.blocks.size());
  for (size_t i = 0; i < f.blocks.size(); ++i) {
    for (auto& s : successors(f.blocks[i].term)) {
      auto it = ix.block_of.find(s);
      if (it == ix.block_of.end()) continue;
      int t = it->second;
      if (std::find(ix.succs[i].begin(), ix.succs[i].end(), t) == ix.succs[i].end())
        ix.succs[i].push_back(t);
      if (std::find(ix.preds[t].begin(), ix.preds[t].end(), (int)i) == ix.preds[t].end())
        ix.preds[t].push_back(static_cast<int>(i));
    }
  }
  return ix;
}

std::vector<bool> reachable_blocks(const FnIndex& ix, size_t nblocks) {
  std::vector<bool> seen(nblocks, false);
  std::vector<int> stack{0};
  seen[0] = true;
  while (!stack.empty()) {
    int b = stack.back();
    stack.pop_back();
    for (int s : ix.succs[b])
      if (!seen[s]) {
        seen[s] = true;
        stack.push_back(s);
      }
  }
  return seen;
}

// Dominators over the reachable subgraph (simple iterative scheme; functions
// here are small).
std::vector<int> compute_idom_local(const FnIndex& ix, const std::vector<bool>& reach) {
  size_t n = ix.succs.size();
  // reverse postorder
  std::vector<int> order;
  std::vector<char> state(n, 0);
  std::function<void(int)> dfs = [&](int b) {
    state[b] = 1;
    for (int s : ix.succs[b])
      if (!state[s]) dfs(s);
    order.push_back(b);
  };
  dfs(0);
  std::reverse(order.begin(), order.end());
  std::vector<int> rpo_num(n, -1);
  for (size_t i = 0; i < order.size(); ++i) rpo_num[order[i]] = static_cast<int>(i);

  std::vector<int> idom(n, -1);
  idom[0] = 0;
  auto intersect_doms = [&](int a, int b) {
    while (a != b) {
      while (rpo_num[a] > rpo_num[b]) a = idom[a];
      while (rpo_num[b] > rpo_num[a]) b = idom[b];
    }
    return a;
  };
  bool changed = true;
  while (changed) {
    changed = false;
    for (int b : order) {
      if (b == 0) continue;
      int new_idom = -1;
      for (int p : ix.preds[b]) {
        if (!reach[p] || idom[p] < 0) continue;
        new_idom = new_idom < 0 ? p : intersect_doms(new_idom, p);
      }
      if (new_idom >= 0 && idom[b] != new_idom) {
        idom[b] = new_idom;
        changed = true;
      }
    }
  }
  return idom;
}

bool dominates(const std::vector<int>& idom, int a, int b) {
  // a dominates b
  while (true) {
    if (a == b) return true;
    if (b == 0 || idom[b] < 0) return false;
    if (idom[b] == b) return false;
    b = idom[b];
  }
}

class FunctionVerifier {
 public:
  FunctionVerifier(const Module& m, const Function& f, std::vector<Violation>& out)
      : m_(m), f_(f), out_(out) {}

  void run() {
    if (!structure()) return;
    stage_rules();
    phi_edges();
    if (m_.stage == Stage::High)
      ssa_rules();
    else
      assignment_rules();
    type_rules();
    ret_rules();
    call_rules();
    if (m_.stage == Stage::Lowered) split_rules();
  }

 private:
  void add(ViolationKind k, const std::string& block, std::string msg) {
    out_.push_back({k, f_.name, block, std::move(msg)});
  }

  bool structure() {
    bool ok = true;
    std::unordered_set<std::string> labels;
    for (auto& b : f_.blocks) {
      if (!labels.insert(b.label).second) {
        add(ViolationKind::DuplicateLabel, b.label, "duplicate block label");
        ok = false;
      }
      if (!is_terminator(b.term.op)) {
        add(ViolationKind::BadTerminator, b.label, "block does not end in a terminator");
        ok = false;
      }
      for (auto& i : b.body)
        if (is_terminator(i.op)) {
          add(ViolationKind::BadTerminator, b.label, "terminator in block body");
          ok = false;
        }
      for (auto& s : successors(b.term))
        if (std::none_of(f_.blocks.begin(), f_.blocks.end(),
                         [&](const Block& x) { return x.label == s; })) {
          add(ViolationKind::UnknownLabel, b.label, "branch to unknown label ^" + s);
          ok = false;
        }
    }
    if (!f_.blocks.empty() && !f_.blocks.front().phis.empty())
      add(ViolationKind::EntryPhi, f_.blocks.front().label, "entry block has phi");
    if (!ok) return false;
    ix_ = build_index(f_);
    reach_ = reachable_blocks(ix_, f_.blocks.size());
    idom_ = compute_idom_local(ix_, reach_);
    return true;
  }

  void stage_rules() {
    for_each_instruction(f_, [&](const Instruction& i) {
      if (m_.stage == Stage::High && is_divergence_op(i.op))
        add(ViolationKind::StageViolation, "",
            std::string(opcode_name(i.op)) + " in High-stage module");
      if (m_.stage == Stage::Lowered && is_high_only_op(i.op))
        add(ViolationKind::StageViolation, "",
            std::string(opcode_name(i.op)) + " in Lowered-stage module");
    });
  }

  void phi_edges() {
    for (size_t bi = 0; bi < f_.blocks.size(); ++bi) {
      const Block& b = f_.blocks[bi];
      std::unordered_set<std::string> preds;
      for (int p : ix_.preds[bi]) preds.insert(f_.blocks[p].label);
      for (auto& phi : b.phis) {
        std::unordered_set<std::string> incoming;
        for (size_t i = 1; i < phi.operands.size(); i += 2)
          if (!incoming.insert(phi.operands[i].name).second)
            add(ViolationKind::PhiEdgeMismatch, b.label,
                "%" + phi.result + " lists ^" + phi.operands[i].name + " twice");
        if (incoming != preds) {
          for (auto& in : incoming)
            if (!preds.count(in))
              add(ViolationKind::PhiEdgeMismatch, b.label,
                  "%" + phi.result + " lists non-predecessor ^" + in);
          for (auto& p : preds)
            if (!incoming.count(p))
              add(ViolationKind::PhiEdgeMismatch, b.label,
                  "%" + phi.result + " misses predecessor ^" + p);
        }
      }
    }
  }

  // High stage: single definition; every use dominated by its definition.
  void ssa_rules() {
    std::unordered_map<std::string, std::pair<int, int>> def_at;  // name -> (block, pos)
    std::unordered_map<std::string, int> def_count;
    for (auto& p : f_.params) {
      def_at[p.name] = {-1, -1};
      def_count[p.name]++;
    }
    for (size_t bi = 0; bi < f_.blocks.size(); ++bi) {
      int pos = 0;
      for_each_instruction(f_.blocks[bi], [&](const Instruction& i) {
        if (i.has_result()) {
          def_count[i.result]++;
          def_at[i.result] = {static_cast<int>(bi), pos};
        }
        ++pos;
      });
    }
    for (auto& [name, n] : def_count)
      if (n > 1)
        add(ViolationKind::MultipleDefinition, "", "%" + name + " defined " +
                                                       std::to_string(n) + " times");

    for (size_t bi = 0; bi < f_.blocks.size(); ++bi) {
      if (!reach_[bi]) continue;
      const Block& b = f_.blocks[bi];
      int pos = 0;
      int phi_count = static_cast<int>(b.phis.size());
      auto check_use = [&](const std::string& v, int use_pos, bool is_phi_use,
                           const std::string& incoming_label) {
        auto it = def_at.find(v);
        if (it == def_at.end()) {
          add(ViolationKind::UndefinedUse, b.label, "%" + v + " has no definition");
          return;
        }
        auto [db, dp] = it->second;
        if (db < 0) return;  // param dominates everything
        if (!reach_[db]) {
          add(ViolationKind::UndefinedUse, b.label,
              "%" + v + " defined only in unreachable code");
          return;
        }
        if (is_phi_use) {
          // evaluated at the end of the incoming block
          int ib = ix_.block_of.count(incoming_label) ? ix_.block_of.at(incoming_label) : -1;
          if (ib < 0) return;
          if (!dominates(idom_, db, ib))
            add(ViolationKind::UndefinedUse, b.label,
                "%" + v + " does not dominate incoming edge from ^" + incoming_label);
          return;
        }
        if (db == static_cast<int>(bi)) {
          if (dp >= use_pos)
            add(ViolationKind::UndefinedUse, b.label,
                "%" + v + " used before its definition");
        } else if (!dominates(idom_, db, static_cast<int>(bi))) {
          add(ViolationKind::UndefinedUse, b.label,
              "%" + v + " definition does not dominate use");
        }
      };
      for_each_instruction(b, [&](const Instruction& i) {
        if (i.op == Opcode::Phi) {
          for (size_t k = 0; k + 1 < i.operands.size(); k += 2)
            check_use(i.operands[k].name, pos, true, i.operands[k + 1].name);
        } else {
          bool use_pos_is_phi = pos < phi_count;
          (void)use_pos_is_phi;
          for (auto& o : i.operands)
            if (o.kind == Operand::Kind::Value) check_use(o.name, pos, false, "");
        }
        ++pos;
      });
    }
  }

  // Lowered stage: definite assignment in place of SSA. Join tokens are
  // exempt; their discipline lives in the nestedness walk which models the
  // reconvergence entry offsets.
  void assignment_rules() {
    size_t n = f_.blocks.size();
    std::vector<std::unordered_set<std::string>> gen(n);
    for (size_t bi = 0; bi < n; ++bi)
      for_each_instruction(f_.blocks[bi], [&](const Instruction& i) {
        if (i.has_result()) gen[bi].insert(i.result);
      });
    std::unordered_set<std::string> entry_in;
    for (auto& p : f_.params) entry_in.insert(p.name);

    // must-reach analysis: optimistic start (everything assigned), shrink to
    // the fixed point
    std::unordered_set<std::string> universe = entry_in;
    for (size_t bi = 0; bi < n; ++bi)
      for (auto& g : gen[bi]) universe.insert(g);

    std::vector<std::unordered_set<std::string>> in(n, universe), out(n, universe);
    in[0] = entry_in;
    bool changed = true;
    while (changed) {
      changed = false;
      for (size_t bi = 0; bi < n; ++bi) {
        if (!reach_[bi]) continue;
        std::unordered_set<std::string> newin;
        if (bi == 0) {
          newin = entry_in;
        } else {
          newin = universe;
          for (int p : ix_.preds[bi]) {
            if (!reach_[p]) continue;
            for (auto it = newin.begin(); it != newin.end();)
              it = out[p].count(*it) ? std::next(it) : newin.erase(it);
          }
        }
        std::unordered_set<std::string> newout = newin;
        for (auto& g : gen[bi]) newout.insert(g);
        if (newin != in[bi] || newout != out[bi]) {
          changed = true;
          in[bi] = std::move(newin);
          out[bi] = std::move(newout);
        }
      }
    }

    for (size_t bi = 0; bi < n; ++bi) {
      if (!reach_[bi]) continue;
      const Block& b = f_.blocks[bi];
      std::unordered_set<std::string> have = in[bi];
      for_each_instruction(b, [&](const Instruction& i) {
        if (i.op != Opcode::Join) {
          for (auto& o : i.operands)
            if (o.kind == Operand::Kind::Value && !have.count(o.name))
              add(ViolationKind::UndefinedUse, b.label,
                  "%" + o.name + " may be unassigned at use");
        }
        if (i.has_result()) have.insert(i.result);
      });
    }
  }

  void type_rules() {
    auto types = compute_value_types(f_, m_);
    auto mask = [&](const std::string& v) -> TypeMask {
      auto it = types.find(v);
      return it == types.end() ? kMaskAll : it->second;
    };
    auto req = [&](const Block& b, const Instruction& i, const std::string& v,
                   TypeMask want, const char* what) {
      TypeMask got = intersect(mask(v), want);
      if (got.empty())
        add(ViolationKind::TypeMismatch, b.label,
            "%" + v + " is not " + what + " in '" + print_name(i) + "'");
    };
    for (auto& [name, tm] : types) {
      if (tm.empty())
        add(ViolationKind::TypeMismatch, "", "%" + name + " has inconsistent types");
    }
    TypeMask data{true, true, false};
    for (auto& b : f_.blocks) {
      for_each_instruction(b, [&](const Instruction& i) {
        switch (i.op) {
          case Opcode::Add: case Opcode::Sub: case Opcode::Mul: case Opcode::Udiv:
          case Opcode::Shl: case Opcode::Shr:
            req(b, i, i.operands[0].name, kMaskI32, "i32");
            req(b, i, i.operands[1].name, kMaskI32, "i32");
            break;
          case Opcode::And: case Opcode::Or: case Opcode::Xor:
            req(b, i, i.operands[0].name, data, "i32/i1");
            req(b, i, i.operands[1].name, data, "i32/i1");
            break;
          case Opcode::Icmp:
            req(b, i, i.operands[0].name, kMaskI32, "i32");
            req(b, i, i.operands[1].name, kMaskI32, "i32");
            break;
          case Opcode::Select: case Opcode::Cmov:
            req(b, i, i.operands[0].name, kMaskI1, "i1");
            break;
          case Opcode::Load:
            req(b, i, i.operands[0].name, kMaskAddr, "addr");
            break;
          case Opcode::Store:
            req(b, i, i.operands[0].name, data, "i32/i1");
            req(b, i, i.operands[1].name, kMaskAddr, "addr");
            break;
          case Opcode::AddrAdd:
            req(b, i, i.operands[0].name, kMaskAddr, "addr");
            req(b, i, i.operands[1].name, kMaskI32, "i32");
            break;
          case Opcode::AtomicAdd:
            req(b, i, i.operands[0].name, kMaskAddr, "addr");
            req(b, i, i.operands[1].name, kMaskI32, "i32");
            break;
          case Opcode::VoteAll: case Opcode::VoteAny: case Opcode::VoteBallot:
            req(b, i, i.operands[0].name, kMaskI1, "i1");
            break;
          case Opcode::Shfl:
            req(b, i, i.operands[0].name, kMaskI32, "i32");
            req(b, i, i.operands[1].name, kMaskI32, "i32");
            break;
          case Opcode::Split:
            req(b, i, i.operands[0].name, kMaskI1, "i1");
            break;
          case Opcode::Join:
            req(b, i, i.operands[0].name, kMaskI32, "i32");
            break;
          case Opcode::Pred:
            req(b, i, i.operands[0].name, kMaskI1, "i1");
            req(b, i, i.operands[1].name, kMaskI32, "i32");
            break;
          case Opcode::Tmc:
            req(b, i, i.operands[0].name, kMaskI32, "i32");
            break;
          case Opcode::Wspawn:
            req(b, i, i.operands[0].name, kMaskI32, "i32");
            break;
          case Opcode::CondBr:
            req(b, i, i.operands[0].name, kMaskI1, "i1");
            break;
          default:
            break;
        }
      });
    }
  }

  static std::string print_name(const Instruction& i) { return opcode_name(i.op); }

  void ret_rules() {
    int with_value = 0, without = 0;
    for (auto& b : f_.blocks) {
      if (b.term.op != Opcode::Ret) continue;
      if (b.term.operands.empty()) ++without;
      else ++with_value;
    }
    if (with_value > 0 && without > 0)
      add(ViolationKind::RetMismatch, "", "mixed value and void returns");
  }

  void call_rules() {
    for (auto& b : f_.blocks) {
      for_each_instruction(b, [&](const Instruction& i) {
        if (i.op != Opcode::Call) return;
        const Function* callee = m_.function(i.operands[0].name);
        if (!callee) {
          add(ViolationKind::BadCall, b.label, "unknown callee @" + i.operands[0].name);
          return;
        }
        if (callee->is_kernel) {
          add(ViolationKind::BadCall, b.label, "cannot call kernel @" + callee->name);
          return;
        }
        size_t nargs = i.operands.size() - 1;
        if (nargs != callee->params.size())
          add(ViolationKind::BadCall, b.label,
              "@" + callee->name + " expects " + std::to_string(callee->params.size()) +
                  " args, got " + std::to_string(nargs));
        bool callee_returns_value = false;
        for (auto& cb : callee->blocks)
          if (cb.term.op == Opcode::Ret && !cb.term.operands.empty())
            callee_returns_value = true;
        if (i.has_result() && !callee_returns_value)
          add(ViolationKind::BadCall, b.label,
              "result taken from void @" + callee->name);
      });
    }
  }

  // Every split must immediately precede its block's conditional branch and
  // agree with it (modulo copy/negation chains mirrored by the negate flag).
  void split_rules() {
    for (auto& b : f_.blocks) {
      for (size_t k = 0; k < b.body.size(); ++k) {
        if (b.body[k].op != Opcode::Split) continue;
        const Instruction& s = b.body[k];
        if (k + 1 != b.body.size() || b.term.op != Opcode::CondBr) {
          add(ViolationKind::SplitNotAdjacent, b.label,
              "split is not immediately before a conditional branch");
          continue;
        }
        ChainRoot cs = resolve_condition_chain(f_, s.operands[0].name);
        ChainRoot cb = resolve_condition_chain(f_, b.term.operands[0].name);
        if (!cs.resolved || !cb.resolved || cs.root != cb.root) {
          add(ViolationKind::SplitBranchMismatch, b.label,
              "split and branch conditions are not provably related");
          continue;
        }
        bool want_negate = cs.negated != cb.negated;
        if (s.negate != want_negate)
          add(ViolationKind::SplitBranchMismatch, b.label,
              "split negate flag disagrees with branch condition");
      }
    }
  }

  const Module& m_;
  const Function& f_;
  std::vector<Violation>& out_;
  FnIndex ix_;
  std::vector<bool> reach_;
  std::vector<int> idom_;
};

}  // namespace

std::unordered_map<std::string, TypeMask> compute_value_types(const Function& f,
                                                              const Module& m) {
  (void)m;
  std::unordered_map<std::string, TypeMask> types;
  for (auto& p : f.params) types[p.name] = mask_of_param(p.type);
  std::vector<const Instruction*> defs;
  for_each_instruction(f, [&](const Instruction& i) {
    if (i.has_result()) {
      defs.push_back(&i);
      if (!types.count(i.result)) types[i.result] = kMaskAll;
    }
  });
  for (auto& p : f.params) types[p.name] = mask_of_param(p.type);

  auto mask = [&](const std::string& v) -> TypeMask {
    auto it = types.find(v);
    return it == types.end() ? kMaskAll : it->second;
  };
  auto produced = [&](const Instruction& i) -> TypeMask {
    switch (i.op) {
      case Opcode::Add: case Opcode::Sub: case Opcode::Mul: case Opcode::Udiv:
      case Opcode::Shl: case Opcode::Shr:
        return kMaskI32;
      case Opcode::And: case Opcode::Or: case Opcode::Xor: {
        TypeMask t = intersect(intersect(mask(i.operands[0].name), mask(i.operands[1].name)),
                               {true, true, false});
        return t;
      }
      case Opcode::Const:
        return mask_of_literal(i.operands[0].imm);
      case Opcode::Icmp: case Opcode::VoteAll: case Opcode::VoteAny:
        return kMaskI1;
      case Opcode::VoteBallot: case Opcode::Load: case Opcode::AtomicAdd:
      case Opcode::Tid: case Opcode::Ntid: case Opcode::Wid: case Opcode::Nwid:
      case Opcode::Coreid: case Opcode::Shfl: case Opcode::Split:
      case Opcode::Activemask:
        return kMaskI32;
      case Opcode::AddrAdd:
        return kMaskAddr;
      case Opcode::Select: case Opcode::Cmov:
        return intersect(mask(i.operands[1].name), mask(i.operands[2].name));
      case Opcode::Mov:
        return mask(i.operands[0].name);
      case Opcode::Phi: {
        TypeMask t = kMaskAll;
        for (size_t k = 0; k + 1 < i.operands.size(); k += 2)
          t = intersect(t, mask(i.operands[k].name));
        return t;
      }
      case Opcode::Call:
        // Cross-function typing is shallow; the callee's own verification
        // pins its ret operands.
        return kMaskAll;
      default:
        return kMaskAll;
    }
  };

  for (int iter = 0; iter < 8; ++iter) {
    bool changed = false;
    std::unordered_map<std::string, TypeMask> acc;
    for (auto* d : defs) {
      TypeMask p = produced(*d);
      auto it = acc.find(d->result);
      if (it == acc.end()) acc[d->result] = p;
      else it->second = intersect(it->second, p);
    }
    for (auto& [name, p] : acc) {
      bool is_param = false;
      for (auto& prm : f.params)
        if (prm.name == name) is_param = true;
      if (is_param) continue;  // shadowing params is rejected elsewhere
      TypeMask cur = types[name];
      if (cur.i32 != p.i32 || cur.i1 != p.i1 || cur.addr != p.addr) {
        types[name] = p;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return types;
}

ChainRoot resolve_condition_chain(const Function& f, const std::string& value) {
  std::unordered_map<std::string, std::vector<const Instruction*>> defs;
  for_each_instruction(f, [&](const Instruction& i) {
    if (i.has_result()) defs[i.result].push_back(&i);
  });
  auto literal_of = [&](const std::string& v, int64_t& out) {
    auto it = defs.find(v);
    if (it == defs.end() || it->second.size() != 1) return false;
    if (it->second[0]->op != Opcode::Const) return false;
    out = it->second[0]->operands[0].imm;
    return true;
  };

  ChainRoot r{value, false, true};
  std::unordered_set<std::string> seen;
  for (;;) {
    if (!seen.insert(r.root).second) return {value, false, false};
    auto it = defs.find(r.root);
    if (it == defs.end() || it->second.size() != 1) return r;  // param or multi-def: stop here
    const Instruction& d = *it->second[0];
    if (d.op == Opcode::Mov) {
      r.root = d.operands[0].name;
      continue;
    }
    if (d.op == Opcode::Xor) {
      int64_t lit;
      if (literal_of(d.operands[1].name, lit) && (lit == 0 || lit == 1)) {
        if (lit == 1) r.negated = !r.negated;
        r.root = d.operands[0].name;
        continue;
      }
      if (literal_of(d.operands[0].name, lit) && (lit == 0 || lit == 1)) {
        if (lit == 1) r.negated = !r.negated;
        r.root = d.operands[1].name;
        continue;
      }
    }
    return r;
  }
}

std::vector<Violation> verify_module(const Module& m) {
  std::vector<Violation> out;
  std::unordered_set<std::string> names;
  int kernels = 0;
  for (auto& f : m.functions) {
    if (!names.insert(f.name).second)
      out.push_back({ViolationKind::DuplicateFunction, f.name, "", "duplicate function"});
    if (f.is_kernel) ++kernels;
  }
  if (kernels != 1)
    out.push_back({ViolationKind::KernelCount, "", "",
                   "module has " + std::to_string(kernels) + " kernel functions"});

  for (auto& f : m.functions) {
    if (f.blocks.empty()) {
      out.push_back({ViolationKind::BadTerminator, f.name, "", "function has no blocks"});
      continue;
    }
    FunctionVerifier(m, f, out).run();
  }

  // Recursion is rejected only when the cycle is reachable from the kernel.
  const Function* k = m.kernel();
  if (k) {
    // wspawn is excluded: spawned warps never return to the spawner, so it
    // creates no recursion
    std::unordered_map<std::string, std::vector<std::string>> cg;
    for (auto& f : m.functions) {
      auto& edges = cg[f.name];
      for_each_instruction(f, [&](const Instruction& i) {
        if (i.op == Opcode::Call) edges.push_back(i.operands[0].name);
      });
    }
    std::unordered_map<std::string, int> state;  // 0 new, 1 on stack, 2 done
    bool cycle = false;
    std::function<void(const std::string&)> dfs = [&](const std::string& n) {
      state[n] = 1;
      for (auto& s : cg[n]) {
        if (!m.function(s)) continue;
        if (state[s] == 1) cycle = true;
        else if (state[s] == 0) dfs(s);
      }
      state[n] = 2;
    };
    dfs(k->name);
    if (cycle)
      out.push_back({ViolationKind::RecursionFromKernel, k->name, "",
                     "call graph reachable from kernel contains a cycle"});
  }
  return out;
}

}  // namespace simtforge
