#include "simtforge/fuzz.hpp"

#include <array>
#include <random>
#include <sstream>

#include "simtforge/printer.hpp"
#include "simtforge/verifier.hpp"

namespace simtforge {

namespace {

constexpr int kVars = 4;

class KernelGen {
 public:
  KernelGen(uint64_t seed, const PipelineConfig& cfg)
      : rng_(seed), cfg_(cfg) {}

  Module run() {
    Module m;
    Function f;
    f.name = "fuzz";
    f.is_kernel = true;
    f.params = {{"in", ValueType::Addr, false},
                {"out", ValueType::Addr, false},
                {"acc", ValueType::Addr, false},
                {"n", ValueType::I32, false}};

    start_block("entry");
    prologue();
    int budget = 3 + static_cast<int>(rng_() % 10);
    emit_region(0, budget);
    if (post_barrier_) {
      // close the cross-slot read phase before the signature store below
      Instruction bar;
      bar.op = Opcode::Barrier;
      bar.operands = {Operand::imm_of(static_cast<int64_t>(barrier_id_++)),
                      Operand::imm_of(cfg_.warp_count)};
      emit(std::move(bar));
    }
    // observable signature of the run
    std::string sig = env_[0];
    for (int i = 1; i < kVars; ++i) sig = binop(Opcode::Xor, sig, env_[i]);
    store(sig, own_slot_);
    if (rng_() % 3 == 0) {
      terminate({Opcode::Ret, "", {Operand::value(sig)}});
    } else {
      terminate({Opcode::Ret, "", {}});
    }
    f.blocks = std::move(blocks_);
    m.functions.push_back(std::move(f));
    return m;
  }

 private:
  // ---- emission plumbing ----
  std::string fresh(const std::string& base) {
    return base + std::to_string(counter_++);
  }
  void start_block(const std::string& label) {
    Block b;
    b.label = label;
    blocks_.push_back(std::move(b));
    cur_ = static_cast<int>(blocks_.size()) - 1;
  }
  Block& cur() { return blocks_[cur_]; }
  void terminate(Instruction t) { cur().term = std::move(t); }

  std::string emit(Instruction ins) {
    std::string r = ins.result;
    cur().body.push_back(std::move(ins));
    return r;
  }
  std::string nullary(Opcode op) {
    Instruction i;
    i.op = op;
    i.result = fresh("v");
    return emit(std::move(i));
  }
  std::string konst(int64_t v) {
    Instruction i;
    i.op = Opcode::Const;
    i.result = fresh("c");
    i.operands = {Operand::imm_of(v)};
    return emit(std::move(i));
  }
  std::string binop(Opcode op, const std::string& a, const std::string& b) {
    Instruction i;
    i.op = op;
    i.result = fresh("v");
    i.operands = {Operand::value(a), Operand::value(b)};
    return emit(std::move(i));
  }
  std::string icmp(IcmpPred p, const std::string& a, const std::string& b) {
    Instruction i;
    i.op = Opcode::Icmp;
    i.icmp = p;
    i.result = fresh("p");
    i.operands = {Operand::value(a), Operand::value(b)};
    return emit(std::move(i));
  }
  std::string addr_add(const std::string& base, const std::string& off) {
    Instruction i;
    i.op = Opcode::AddrAdd;
    i.result = fresh("a");
    i.operands = {Operand::value(base), Operand::value(off)};
    return emit(std::move(i));
  }
  std::string load(const std::string& p) {
    Instruction i;
    i.op = Opcode::Load;
    i.result = fresh("v");
    i.operands = {Operand::value(p)};
    return emit(std::move(i));
  }
  void store(const std::string& v, const std::string& p) {
    Instruction i;
    i.op = Opcode::Store;
    i.operands = {Operand::value(v), Operand::value(p)};
    emit(std::move(i));
  }

  void prologue() {
    tid_ = nullary(Opcode::Tid);
    ntid_ = nullary(Opcode::Ntid);
    std::string nwid = nullary(Opcode::Nwid);
    ws_ = binop(Opcode::Udiv, ntid_, nwid);
    one_ = konst(1);
    zero_ = konst(0);
    wsm1_ = binop(Opcode::Sub, ws_, one_);
    ntidm1_ = binop(Opcode::Sub, ntid_, one_);
    mask63_ = konst(63);
    own_slot_ = addr_add("out", tid_);
    for (int i = 0; i < kVars; ++i) {
      switch (rng_() % 4) {
        case 0: env_[i] = tid_; break;
        case 1: env_[i] = konst(static_cast<int64_t>(rng_() % 97)); break;
        case 2: env_[i] = "n"; break;
        default: env_[i] = binop(Opcode::Add, tid_, konst(rng_() % 13)); break;
      }
    }
  }

  std::string operand() {
    switch (rng_() % 8) {
      case 0: return tid_;
      case 1: return "n";
      case 2: return konst(static_cast<int64_t>(rng_() % 61));
      default: return env_[rng_() % kVars];
    }
  }
  std::string uniform_operand() {
    switch (rng_() % 3) {
      case 0: return "n";
      case 1: return konst(static_cast<int64_t>(rng_() % 61));
      default: return ntid_;
    }
  }
  IcmpPred rand_pred() {
    static const IcmpPred preds[] = {IcmpPred::Eq,  IcmpPred::Ne,  IcmpPred::Slt,
                                     IcmpPred::Sle, IcmpPred::Sgt, IcmpPred::Sge,
                                     IcmpPred::Ult};
    return preds[rng_() % 7];
  }
  std::string condition(bool force_uniform) {
    if (force_uniform) {
      std::string k = konst(static_cast<int64_t>(rng_() % 32));
      return icmp(rand_pred(), uniform_operand(), k);
    }
    std::string lhs = rng_() % 2 ? binop(Opcode::And, tid_, konst(1 + rng_() % 7))
                                 : env_[rng_() % kVars];
    return icmp(rand_pred(), lhs, operand());
  }

  void stmt_assign() {
    static const Opcode ops[] = {Opcode::Add, Opcode::Sub, Opcode::Mul,
                                 Opcode::And, Opcode::Or,  Opcode::Xor,
                                 Opcode::Shl, Opcode::Shr};
    int v = static_cast<int>(rng_() % kVars);
    Opcode op = ops[rng_() % 8];
    env_[v] = binop(op, operand(), operand());
  }
  void stmt_udiv() {
    int v = static_cast<int>(rng_() % kVars);
    std::string denom = binop(Opcode::Or, operand(), one_);
    env_[v] = binop(Opcode::Udiv, operand(), denom);
  }
  void stmt_store_own() { store(env_[rng_() % kVars], own_slot_); }
  void stmt_load_own() { env_[rng_() % kVars] = load(own_slot_); }
  void stmt_load_in() {
    std::string idx = binop(Opcode::And, operand(), mask63_);
    env_[rng_() % kVars] = load(addr_add("in", idx));
  }
  void stmt_atomic() {
    std::string idx = binop(Opcode::And, operand(), mask63_);
    Instruction i;
    i.op = Opcode::AtomicAdd;
    i.result = fresh("old");  // order-dependent: deliberately never used
    i.operands = {Operand::value(addr_add("acc", idx)), Operand::value(operand())};
    emit(std::move(i));
  }
  void stmt_vote() {
    std::string c = condition(false);
    Instruction i;
    i.op = rng_() % 3 == 0 ? Opcode::VoteAll
           : rng_() % 2 == 0 ? Opcode::VoteAny
                             : Opcode::VoteBallot;
    i.result = fresh("v");
    i.operands = {Operand::value(c)};
    bool is_ballot = i.op == Opcode::VoteBallot;
    std::string r = emit(std::move(i));
    if (is_ballot) {
      env_[rng_() % kVars] = r;
    } else {
      // widen the flag for arithmetic use
      Instruction sel;
      sel.op = Opcode::Select;
      sel.result = fresh("w");
      sel.operands = {Operand::value(r), Operand::value(one_), Operand::value(zero_)};
      env_[rng_() % kVars] = emit(std::move(sel));
    }
  }
  void stmt_shfl() {
    std::string lane = binop(Opcode::And, operand(), wsm1_);
    Instruction i;
    i.op = Opcode::Shfl;
    i.result = fresh("v");
    i.operands = {Operand::value(env_[rng_() % kVars]), Operand::value(lane)};
    env_[rng_() % kVars] = emit(std::move(i));
  }
  void stmt_load_neighbor() {
    std::string next = binop(Opcode::Add, tid_, one_);
    std::string idx = binop(Opcode::And, next, ntidm1_);
    env_[rng_() % kVars] = load(addr_add("out", idx));
  }
  void stmt_barrier() {
    store(env_[rng_() % kVars], own_slot_);  // give neighbours something to read
    Instruction i;
    i.op = Opcode::Barrier;
    i.operands = {Operand::imm_of(static_cast<int64_t>(barrier_id_++)),
                  Operand::imm_of(cfg_.warp_count)};
    emit(std::move(i));
    post_barrier_ = true;
  }

  void stmt_if(int depth, int budget) {
    bool with_else = rng_() % 2 == 0;
    std::string c = condition(rng_() % 3 == 0);
    std::string then_lbl = fresh("then");
    std::string else_lbl = with_else ? fresh("else") : "";
    std::string join_lbl = fresh("join");

    auto env_before = env_;
    terminate({Opcode::CondBr, "",
               {Operand::value(c), Operand::label(then_lbl),
                Operand::label(with_else ? else_lbl : join_lbl)}});
    std::string pred_from_cond = cur().label;

    start_block(then_lbl);
    emit_region(depth + 1, budget);
    auto env_then = env_;
    std::string then_end = cur().label;
    terminate({Opcode::Br, "", {Operand::label(join_lbl)}});

    auto env_else = env_before;
    std::string else_end = pred_from_cond;
    if (with_else) {
      env_ = env_before;
      start_block(else_lbl);
      emit_region(depth + 1, budget);
      env_else = env_;
      else_end = cur().label;
      terminate({Opcode::Br, "", {Operand::label(join_lbl)}});
    }

    start_block(join_lbl);
    for (int i = 0; i < kVars; ++i) {
      if (env_then[i] == env_else[i]) {
        env_[i] = env_then[i];
        continue;
      }
      Instruction phi;
      phi.op = Opcode::Phi;
      phi.result = fresh("m");
      phi.operands = {Operand::value(env_then[i]), Operand::label(then_end),
                      Operand::value(env_else[i]), Operand::label(else_end)};
      cur().phis.push_back(phi);
      env_[i] = phi.result;
    }
  }

  void stmt_while(int depth, int budget) {
    bool uniform_bound = rng_() % 2 == 0;
    std::string bound;
    if (uniform_bound) {
      bound = konst(1 + static_cast<int64_t>(rng_() % 4));
    } else {
      std::string masked = binop(Opcode::And, tid_, konst(3));
      bound = binop(Opcode::Add, masked, one_);
    }
    std::string pre_end = cur().label;
    std::string head_lbl = fresh("head");
    std::string body_lbl = fresh("body");
    std::string exit_lbl = fresh("brk");
    terminate({Opcode::Br, "", {Operand::label(head_lbl)}});

    auto env_before = env_;
    start_block(head_lbl);
    int head_ix = cur_;
    // loop-carried phis for the counter and every variable; the latch
    // incomings are patched once the body exists
    Instruction iphi;
    iphi.op = Opcode::Phi;
    iphi.result = fresh("i");
    iphi.operands = {Operand::value(zero_), Operand::label(pre_end)};
    cur().phis.push_back(iphi);
    std::string i_name = iphi.result;
    std::array<std::string, kVars> head_names;
    for (int i = 0; i < kVars; ++i) {
      Instruction phi;
      phi.op = Opcode::Phi;
      phi.result = fresh("h");
      phi.operands = {Operand::value(env_before[i]), Operand::label(pre_end)};
      cur().phis.push_back(phi);
      head_names[i] = phi.result;
      env_[i] = phi.result;
    }
    std::string c = icmp(IcmpPred::Slt, i_name, bound);
    terminate({Opcode::CondBr, "",
               {Operand::value(c), Operand::label(body_lbl), Operand::label(exit_lbl)}});

    start_block(body_lbl);
    bool with_break = depth < 2 && rng_() % 3 == 0;
    std::string break_end;
    std::array<std::string, kVars> env_break{};
    if (with_break) {
      emit_region(depth + 1, budget / 2 + 1);
      std::string bc = condition(false);
      std::string stay_lbl = fresh("stay");
      std::string brk_lbl = fresh("out");
      terminate({Opcode::CondBr, "",
                 {Operand::value(bc), Operand::label(brk_lbl), Operand::label(stay_lbl)}});
      start_block(brk_lbl);
      env_break = env_;
      break_end = cur().label;
      terminate({Opcode::Br, "", {Operand::label(exit_lbl)}});
      start_block(stay_lbl);
    }
    emit_region(depth + 1, budget);
    std::string i_next = binop(Opcode::Add, i_name, one_);
    std::string latch_end = cur().label;
    terminate({Opcode::Br, "", {Operand::label(head_lbl)}});

    // patch the latch incomings
    Block& head = blocks_[head_ix];
    head.phis[0].operands.push_back(Operand::value(i_next));
    head.phis[0].operands.push_back(Operand::label(latch_end));
    for (int i = 0; i < kVars; ++i) {
      head.phis[i + 1].operands.push_back(Operand::value(env_[i]));
      head.phis[i + 1].operands.push_back(Operand::label(latch_end));
    }

    start_block(exit_lbl);
    for (int i = 0; i < kVars; ++i) {
      if (!with_break || env_break[i] == head_names[i]) {
        env_[i] = head_names[i];
        continue;
      }
      Instruction phi;
      phi.op = Opcode::Phi;
      phi.result = fresh("x");
      phi.operands = {Operand::value(head_names[i]), Operand::label(head_lbl),
                      Operand::value(env_break[i]), Operand::label(break_end)};
      cur().phis.push_back(phi);
      env_[i] = phi.result;
    }
  }

  void emit_region(int depth, int budget) {
    int stmts = 1 + static_cast<int>(rng_() % 3);
    for (int s = 0; s < stmts && budget > 0; ++s, --budget) {
      int roll = static_cast<int>(rng_() % 100);
      if (depth == 0 && !post_barrier_ && barrier_id_ == 0 && roll < 8 &&
          cfg_.warp_count >= 1) {
        stmt_barrier();
      } else if (depth == 0 && roll < 16) {
        switch (rng_() % 3) {
          case 0: stmt_vote(); break;
          case 1: stmt_shfl(); break;
          default:
            if (post_barrier_) stmt_load_neighbor();
            else stmt_vote();
            break;
        }
      } else if (roll < 34 && depth < 3) {
        stmt_if(depth, budget / 2 + 1);
      } else if (roll < 46 && depth < 3) {
        stmt_while(depth, budget / 2 + 1);
      } else if (roll < 56) {
        if (post_barrier_) stmt_load_neighbor();
        else stmt_store_own();
      } else if (roll < 64) {
        stmt_load_in();
      } else if (roll < 70 && !post_barrier_) {
        stmt_load_own();
      } else if (roll < 78) {
        stmt_atomic();
      } else if (roll < 84) {
        stmt_udiv();
      } else {
        stmt_assign();
      }
    }
  }

  std::mt19937_64 rng_;
  PipelineConfig cfg_;
  std::vector<Block> blocks_;
  int cur_ = 0;
  int counter_ = 0;
  int barrier_id_ = 0;
  bool post_barrier_ = false;
  std::array<std::string, kVars> env_;
  std::string tid_, ntid_, ws_, one_, zero_, wsm1_, ntidm1_, mask63_, own_slot_;
};

}  // namespace

Module generate_fuzz_kernel(uint64_t seed, int index, const PipelineConfig& cfg) {
  uint64_t s = seed * 1000003ull + static_cast<uint64_t>(index) * 7919ull + 17;
  return KernelGen(s, cfg).run();
}

FuzzResult fuzz_kernels(uint64_t seed, int count, const PipelineConfig& cfg,
                        const FuzzOptions& opts) {
  FuzzResult res;
  res.count = count;
  std::ostringstream results;
  results << "[";
  for (int i = 0; i < count; ++i) {
    Module m = generate_fuzz_kernel(seed, i, cfg);
    auto violations = verify_module(m);
    std::string status;
    std::string detail;
    if (!violations.empty()) {
      status = "generator-error";
      detail = violations.front().str();
      res.errors += 1;
    } else {
      ProvisionedArgs pa = provision_args(*m.kernel(), cfg);
      CompareOptions co;
      co.repair = opts.repair;
      if (opts.perturb_mode) {
        co.perturb_mode = opts.perturb_mode;
        co.perturb_seed = static_cast<uint64_t>(i);
      }
      CompareOutcome out = compare_module(m, cfg, pa.args, pa.mem_init, co);
      if (!out.sim.invariant_violations.empty()) {
        status = "invariant-violation";
        detail = out.sim.invariant_violations.front();
        res.errors += 1;
      } else {
        switch (out.kind) {
          case CompareOutcome::Kind::Match:
            status = "match";
            res.matches += 1;
            break;
          case CompareOutcome::Kind::Mismatch:
            status = "mismatch";
            detail = out.detail;
            res.mismatches += 1;
            break;
          default:
            status = "error";
            detail = out.detail;
            res.errors += 1;
            break;
        }
      }
    }
    if (i) results << ", ";
    results << "{\"index\": " << i << ", \"status\": \"" << status << "\"";
    if (!detail.empty()) {
      std::string clean;
      for (char ch : detail)
        clean += (ch == '"' || ch == '\\' || ch == '\n') ? ' ' : ch;
      results << ", \"detail\": \"" << clean << "\"";
    }
    results << "}";
  }
  results << "]";

  std::ostringstream os;
  os << "{\"count\": " << count << ", \"errors\": " << res.errors
     << ", \"matches\": " << res.matches << ", \"mismatches\": " << res.mismatches
     << ", \"results\": " << results.str() << ", \"seed\": " << seed
     << ", \"threads\": " << cfg.total_threads() << ", \"warps\": " << cfg.warp_count
     << "}";
  res.report_json = os.str();
  return res;
}

}  // namespace simtforge
