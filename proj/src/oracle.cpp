#include "simtforge/oracle.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>

namespace simtforge {

namespace {

// The oracle keeps its own resolved program form; nothing here is shared
// with the lockstep simulator's loop.
struct ROp {
  enum class K { Slot, Imm, Block, Func } kind = K::Slot;
  int index = 0;
  int64_t imm = 0;
};

struct RIns {
  Opcode op;
  IcmpPred icmp;
  int dst = -1;
  std::vector<ROp> ops;
  int uid = 0;  // unique per module, for rendezvous identity
};

struct RPhiIn {
  int src_slot;
  int pred_block;
};

struct RPhi {
  int dst;
  std::vector<RPhiIn> ins;
};

struct RBlock {
  std::vector<RPhi> phis;
  std::vector<RIns> body;
  RIns term;
};

struct RFunc {
  std::string name;
  int nslots = 0;
  int nparams = 0;
  std::vector<RBlock> blocks;
};

struct Program {
  std::vector<RFunc> funcs;
  std::unordered_map<std::string, int> func_index;
};

Program resolve(const Module& m) {
  Program p;
  for (size_t i = 0; i < m.functions.size(); ++i)
    p.func_index[m.functions[i].name] = static_cast<int>(i);
  int uid = 0;
  for (auto& f : m.functions) {
    RFunc rf;
    rf.name = f.name;
    std::unordered_map<std::string, int> slot;
    auto slot_of = [&](const std::string& n) {
      auto it = slot.find(n);
      if (it != slot.end()) return it->second;
      int s = static_cast<int>(slot.size());
      slot[n] = s;
      return s;
    };
    for (auto& prm : f.params) slot_of(prm.name);
    rf.nparams = static_cast<int>(f.params.size());

    std::unordered_map<std::string, int> blocks;
    for (size_t bi = 0; bi < f.blocks.size(); ++bi) blocks[f.blocks[bi].label] = (int)bi;

    auto rins = [&](const Instruction& ins) {
      RIns r;
      r.op = ins.op;
      r.icmp = ins.icmp;
      r.uid = uid++;
      if (ins.has_result()) r.dst = slot_of(ins.result);
      for (auto& o : ins.operands) {
        ROp ro;
        switch (o.kind) {
          case Operand::Kind::Value:
            ro.kind = ROp::K::Slot;
            ro.index = slot_of(o.name);
            break;
          case Operand::Kind::Label:
            ro.kind = ROp::K::Block;
            ro.index = blocks.at(o.name);
            break;
          case Operand::Kind::Func:
            ro.kind = ROp::K::Func;
            ro.index = p.func_index.count(o.name) ? p.func_index.at(o.name) : -1;
            break;
          case Operand::Kind::Imm:
            ro.kind = ROp::K::Imm;
            ro.imm = o.imm;
            break;
        }
        r.ops.push_back(ro);
      }
      return r;
    };

    for (auto& b : f.blocks) {
      RBlock rb;
      for (auto& phi : b.phis) {
        RPhi rp;
        rp.dst = slot_of(phi.result);
        for (size_t k = 0; k + 1 < phi.operands.size(); k += 2)
          rp.ins.push_back({slot_of(phi.operands[k].name),
                            blocks.at(phi.operands[k + 1].name)});
        rb.phis.push_back(std::move(rp));
      }
      for (auto& i : b.body) rb.body.push_back(rins(i));
      rb.term = rins(b.term);
      rf.blocks.push_back(std::move(rb));
    }
    rf.nslots = static_cast<int>(slot.size());
    p.funcs.push_back(std::move(rf));
  }
  return p;
}

struct Frame {
  int func;
  int block = 0;
  int pos = 0;  // index into body; past-the-end means the terminator
  int last_block = -1;
  int ret_dst = -1;  // caller slot for the call result
  std::vector<uint32_t> regs;
};

enum class TStatus { Runnable, AtBarrier, AtRendezvous, Halted };

struct Thread {
  TStatus status = TStatus::Runnable;
  std::vector<Frame> stack;
  // barrier wait
  int bar_id = 0;
  int bar_warps = 0;
  // rendezvous wait
  int rdv_uid = 0;
  uint64_t rdv_seq = 0;
  uint32_t rdv_value = 0;  // vote condition / shfl source value
  uint32_t rdv_lane = 0;   // shfl lane operand
  uint64_t intrinsic_seq = 0;
  uint32_t ret_value = 0;
};

struct OracleAbort {
  std::string message;
  bool deadlock = false;
};

class OracleMachine {
 public:
  OracleMachine(const Module& m, const PipelineConfig& cfg,
                const std::vector<uint32_t>& args, const std::vector<uint32_t>& mem_init)
      : prog_(resolve(m)), cfg_(cfg) {
    const Function* k = m.kernel();
    kernel_ = prog_.func_index.at(k->name);
    memory_.assign(cfg.mem_words, 0);
    for (size_t i = 0; i < mem_init.size() && i < memory_.size(); ++i)
      memory_[i] = mem_init[i];
    int n = cfg.total_threads();
    threads_.resize(n);
    for (int t = 0; t < n; ++t) {
      Frame fr;
      fr.func = kernel_;
      fr.regs.assign(prog_.funcs[kernel_].nslots, 0);
      for (size_t a = 0; a < args.size() && a < (size_t)prog_.funcs[kernel_].nparams; ++a)
        fr.regs[a] = args[a];
      threads_[t].stack.push_back(std::move(fr));
    }
    rets_.assign(n, 0);
  }

  OracleResult run() {
    OracleResult res;
    try {
      loop();
      res.ok = true;
      res.memory = std::move(memory_);
      res.rets = std::move(rets_);
      res.steps = steps_;
    } catch (const OracleAbort& a) {
      res.ok = false;
      res.deadlock = a.deadlock;
      res.error = a.message;
      res.steps = steps_;
    }
    return res;
  }

 private:
  void loop() {
    for (;;) {
      bool ran = false;
      for (size_t t = 0; t < threads_.size(); ++t) {
        if (threads_[t].status == TStatus::Runnable) {
          run_thread(static_cast<int>(t));
          ran = true;
        }
      }
      bool all_halted = true;
      for (auto& th : threads_)
        if (th.status != TStatus::Halted) all_halted = false;
      if (all_halted) return;

      bool released = release_rendezvous();
      released |= release_barriers();
      if (!ran && !released)
        throw OracleAbort{"deadlock: no thread can make progress", true};
    }
  }

  bool release_barriers() {
    // A barrier with warp-count operand k releases once k warps' worth of
    // threads are waiting on its id.
    std::unordered_map<int, std::pair<int, int>> waiting;  // id -> (count, k)
    for (auto& th : threads_)
      if (th.status == TStatus::AtBarrier) {
        auto& w = waiting[th.bar_id];
        w.first += 1;
        w.second = th.bar_warps;
      }
    bool any = false;
    for (auto& [id, ck] : waiting) {
      if (ck.first >= ck.second * cfg_.warp_size) {
        for (auto& th : threads_)
          if (th.status == TStatus::AtBarrier && th.bar_id == id)
            th.status = TStatus::Runnable;
        any = true;
      }
    }
    return any;
  }

  bool release_rendezvous() {
    bool any = false;
    for (int w = 0; w < cfg_.warp_count; ++w) {
      int base = w * cfg_.warp_size;
      bool all_waiting = true, some_waiting = false;
      for (int l = 0; l < cfg_.warp_size; ++l) {
        auto& th = threads_[base + l];
        if (th.status == TStatus::Halted) continue;
        if (th.status == TStatus::AtRendezvous) some_waiting = true;
        else all_waiting = false;
      }
      if (!some_waiting || !all_waiting) continue;
      // all non-halted peers are waiting; they must agree on the instance
      int uid = -1;
      uint64_t seq = 0;
      bool first = true, agree = true;
      for (int l = 0; l < cfg_.warp_size; ++l) {
        auto& th = threads_[base + l];
        if (th.status != TStatus::AtRendezvous) continue;
        if (first) {
          uid = th.rdv_uid;
          seq = th.rdv_seq;
          first = false;
        } else if (th.rdv_uid != uid || th.rdv_seq != seq) {
          agree = false;
        }
      }
      if (!agree)
        throw OracleAbort{
            "warp intrinsic rendezvous desynchronised in warp " + std::to_string(w),
            true};
      complete_rendezvous(w, uid);
      any = true;
    }
    return any;
  }

  void complete_rendezvous(int w, int uid) {
    int base = w * cfg_.warp_size;
    const RIns* ins = find_uid(uid);
    std::vector<Thread*> peers;
    for (int l = 0; l < cfg_.warp_size; ++l)
      if (threads_[base + l].status == TStatus::AtRendezvous)
        peers.push_back(&threads_[base + l]);
    auto write_result = [&](Thread& th, uint32_t v) {
      Frame& fr = th.stack.back();
      if (ins->dst >= 0) fr.regs[ins->dst] = v;
      th.status = TStatus::Runnable;
    };
    switch (ins->op) {
      case Opcode::VoteAll: {
        uint32_t all = 1;
        for (auto* p : peers)
          if (!p->rdv_value) all = 0;
        for (auto* p : peers) write_result(*p, all);
        break;
      }
      case Opcode::VoteAny: {
        uint32_t anyv = 0;
        for (auto* p : peers)
          if (p->rdv_value) anyv = 1;
        for (auto* p : peers) write_result(*p, anyv);
        break;
      }
      case Opcode::VoteBallot: {
        uint32_t bits = 0;
        for (int l = 0; l < cfg_.warp_size; ++l) {
          auto& th = threads_[base + l];
          if (th.status == TStatus::AtRendezvous && th.rdv_value)
            bits |= (1u << l);
        }
        for (auto* p : peers) write_result(*p, bits);
        break;
      }
      case Opcode::Shfl: {
        for (auto* p : peers) {
          uint32_t lane = p->rdv_lane;
          uint32_t v = 0;
          if (lane < (uint32_t)cfg_.warp_size) {
            auto& src = threads_[base + lane];
            if (src.status != TStatus::Halted) v = src.rdv_value;
          }
          write_result(*p, v);
        }
        break;
      }
      default:
        throw OracleAbort{"internal: bad rendezvous opcode", false};
    }
  }

  const RIns* find_uid(int uid) {
    for (auto& f : prog_.funcs)
      for (auto& b : f.blocks) {
        for (auto& i : b.body)
          if (i.uid == uid) return &i;
        if (b.term.uid == uid) return &b.term;
      }
    throw OracleAbort{"internal: unknown rendezvous instruction", false};
  }

  [[noreturn]] void fault(int tid, const std::string& msg) {
    throw OracleAbort{"thread " + std::to_string(tid) + ": " + msg, false};
  }

  void bump(int tid) {
    if (++steps_ > cfg_.step_limit) fault(tid, "step limit exceeded");
  }

  void enter_block(Thread& th, int target) {
    Frame& fr = th.stack.back();
    const RBlock& nb = prog_.funcs[fr.func].blocks[target];
    if (!nb.phis.empty()) {
      // parallel copy: read every incoming value before any write
      std::vector<uint32_t> vals(nb.phis.size());
      for (size_t i = 0; i < nb.phis.size(); ++i) {
        bool found = false;
        for (auto& in : nb.phis[i].ins)
          if (in.pred_block == fr.block) {
            vals[i] = fr.regs[in.src_slot];
            found = true;
            break;
          }
        if (!found) vals[i] = 0;
      }
      for (size_t i = 0; i < nb.phis.size(); ++i) fr.regs[nb.phis[i].dst] = vals[i];
    }
    fr.last_block = fr.block;
    fr.block = target;
    fr.pos = 0;
  }

  // Runs thread tid until it halts or blocks.
  void run_thread(int tid) {
    Thread& th = threads_[tid];
    while (th.status == TStatus::Runnable) {
      Frame& fr = th.stack.back();
      const RFunc& rf = prog_.funcs[fr.func];
      const RBlock& bb = rf.blocks[fr.block];
      bool is_term = fr.pos >= static_cast<int>(bb.body.size());
      const RIns& ins = is_term ? bb.term : bb.body[fr.pos];
      bump(tid);
      if (!is_term) ++fr.pos;
      step(tid, th, ins);
    }
  }

  uint32_t val(const Frame& fr, const ROp& o) const { return fr.regs[o.index]; }

  void step(int tid, Thread& th, const RIns& ins) {
    Frame& fr = th.stack.back();
    auto setd = [&](uint32_t v) {
      if (ins.dst >= 0) fr.regs[ins.dst] = v;
    };
    switch (ins.op) {
      case Opcode::Add: setd(val(fr, ins.ops[0]) + val(fr, ins.ops[1])); break;
      case Opcode::Sub: setd(val(fr, ins.ops[0]) - val(fr, ins.ops[1])); break;
      case Opcode::Mul: setd(val(fr, ins.ops[0]) * val(fr, ins.ops[1])); break;
      case Opcode::Udiv: {
        uint32_t d = val(fr, ins.ops[1]);
        if (d == 0) fault(tid, "udiv by zero");
        setd(val(fr, ins.ops[0]) / d);
        break;
      }
      case Opcode::And: setd(val(fr, ins.ops[0]) & val(fr, ins.ops[1])); break;
      case Opcode::Or: setd(val(fr, ins.ops[0]) | val(fr, ins.ops[1])); break;
      case Opcode::Xor: setd(val(fr, ins.ops[0]) ^ val(fr, ins.ops[1])); break;
      case Opcode::Shl: setd(val(fr, ins.ops[0]) << (val(fr, ins.ops[1]) & 31)); break;
      case Opcode::Shr: setd(val(fr, ins.ops[0]) >> (val(fr, ins.ops[1]) & 31)); break;
      case Opcode::Const: setd(static_cast<uint32_t>(ins.ops[0].imm)); break;
      case Opcode::Icmp: {
        uint32_t a = val(fr, ins.ops[0]), b = val(fr, ins.ops[1]);
        int32_t sa = static_cast<int32_t>(a), sb = static_cast<int32_t>(b);
        bool r = false;
        switch (ins.icmp) {
          case IcmpPred::Eq: r = a == b; break;
          case IcmpPred::Ne: r = a != b; break;
          case IcmpPred::Slt: r = sa < sb; break;
          case IcmpPred::Sle: r = sa <= sb; break;
          case IcmpPred::Sgt: r = sa > sb; break;
          case IcmpPred::Sge: r = sa >= sb; break;
          case IcmpPred::Ult: r = a < b; break;
        }
        setd(r ? 1 : 0);
        break;
      }
      case Opcode::Select:
        setd(val(fr, ins.ops[0]) ? val(fr, ins.ops[1]) : val(fr, ins.ops[2]));
        break;
      case Opcode::Tid: setd(static_cast<uint32_t>(tid)); break;
      case Opcode::Ntid: setd(static_cast<uint32_t>(cfg_.total_threads())); break;
      case Opcode::Wid: setd(static_cast<uint32_t>(tid / cfg_.warp_size)); break;
      case Opcode::Nwid: setd(static_cast<uint32_t>(cfg_.warp_count)); break;
      case Opcode::Coreid: setd(0); break;
      case Opcode::Load: {
        uint32_t p = val(fr, ins.ops[0]);
        if (p >= memory_.size()) fault(tid, "load out of bounds at word " + std::to_string(p));
        setd(memory_[p]);
        break;
      }
      case Opcode::Store: {
        uint32_t v = val(fr, ins.ops[0]);
        uint32_t p = val(fr, ins.ops[1]);
        if (p >= memory_.size()) fault(tid, "store out of bounds at word " + std::to_string(p));
        memory_[p] = v;
        break;
      }
      case Opcode::AddrAdd: setd(val(fr, ins.ops[0]) + val(fr, ins.ops[1])); break;
      case Opcode::AtomicAdd: {
        uint32_t p = val(fr, ins.ops[0]);
        if (p >= memory_.size())
          fault(tid, "atomic_add out of bounds at word " + std::to_string(p));
        uint32_t old = memory_[p];
        memory_[p] = old + val(fr, ins.ops[1]);
        setd(old);
        break;
      }
      case Opcode::VoteAll:
      case Opcode::VoteAny:
      case Opcode::VoteBallot:
      case Opcode::Shfl: {
        th.status = TStatus::AtRendezvous;
        th.rdv_uid = ins.uid;
        th.rdv_seq = ++th.intrinsic_seq;
        th.rdv_value = val(fr, ins.ops[0]);
        th.rdv_lane = ins.op == Opcode::Shfl ? val(fr, ins.ops[1]) : 0;
        break;
      }
      case Opcode::Call: {
        int callee = ins.ops[0].index;
        if (callee < 0) fault(tid, "call to unknown function");
        Frame nf;
        nf.func = callee;
        nf.ret_dst = ins.dst;
        nf.regs.assign(prog_.funcs[callee].nslots, 0);
        for (size_t a = 1; a < ins.ops.size(); ++a)
          nf.regs[a - 1] = val(fr, ins.ops[a]);
        if (th.stack.size() >= 64) fault(tid, "call stack overflow");
        th.stack.push_back(std::move(nf));
        break;
      }
      case Opcode::AssumeUniform:
        break;  // annotation; the scalar oracle has no lanes to compare
      case Opcode::Barrier: {
        int k = static_cast<int>(ins.ops[1].imm);
        if (k > cfg_.warp_count) fault(tid, "barrier warp count exceeds launch");
        th.status = TStatus::AtBarrier;
        th.bar_id = static_cast<int>(ins.ops[0].imm);
        th.bar_warps = k;
        break;
      }
      case Opcode::Br:
        enter_block(th, ins.ops[0].index);
        break;
      case Opcode::CondBr:
        enter_block(th, val(fr, ins.ops[0]) ? ins.ops[1].index : ins.ops[2].index);
        break;
      case Opcode::Ret: {
        uint32_t v = ins.ops.empty() ? 0 : val(fr, ins.ops[0]);
        int ret_dst = fr.ret_dst;
        th.stack.pop_back();
        if (th.stack.empty()) {
          rets_[tid] = v;
          th.status = TStatus::Halted;
        } else if (ret_dst >= 0) {
          th.stack.back().regs[ret_dst] = v;
        }
        break;
      }
      default:
        fault(tid, std::string("opcode '") + opcode_name(ins.op) +
                       "' is not executable in the High-stage oracle");
    }
  }

  Program prog_;
  PipelineConfig cfg_;
  int kernel_;
  std::vector<uint32_t> memory_;
  std::vector<Thread> threads_;
  std::vector<uint32_t> rets_;
  uint64_t steps_ = 0;
};

}  // namespace

OracleResult run_oracle(const Module& m, const PipelineConfig& cfg,
                        const std::vector<uint32_t>& args,
                        const std::vector<uint32_t>& mem_init) {
  if (m.stage != Stage::High)
    return {false, false, "oracle requires a High-stage module", {}, {}, 0};
  if (!m.kernel()) return {false, false, "module has no kernel", {}, {}, 0};
  return OracleMachine(m, cfg, args, mem_init).run();
}

OutcomeDiff diff_outcomes(const std::vector<uint32_t>& mem_a,
                          const std::vector<uint32_t>& rets_a,
                          const std::vector<uint32_t>& mem_b,
                          const std::vector<uint32_t>& rets_b) {
  OutcomeDiff d;
  std::ostringstream os;
  int listed = 0;
  if (mem_a.size() != mem_b.size() || rets_a.size() != rets_b.size()) {
    d.match = false;
    d.report = "outcome shapes differ";
    return d;
  }
  for (size_t i = 0; i < mem_a.size() && listed < 16; ++i)
    if (mem_a[i] != mem_b[i]) {
      d.match = false;
      os << "mem[" << i << "]: " << mem_a[i] << " != " << mem_b[i] << "\n";
      ++listed;
    }
  for (size_t t = 0; t < rets_a.size() && listed < 16; ++t)
    if (rets_a[t] != rets_b[t]) {
      d.match = false;
      os << "ret[" << t << "]: " << rets_a[t] << " != " << rets_b[t] << "\n";
      ++listed;
    }
  d.report = os.str();
  return d;
}

}  // namespace simtforge
