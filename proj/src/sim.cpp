#include "simtforge/sim.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>
#include <unordered_map>

namespace simtforge {

namespace {

using Mask = uint64_t;

struct SOp {
  enum class K { Slot, Imm, Block, Func } kind = K::Slot;
  int index = 0;
  int64_t imm = 0;
};

struct SIns {
  Opcode op;
  IcmpPred icmp;
  bool negate = false;
  int dst = -1;
  bool dst_uniform = false;  // statically-proven Uniform result
  std::vector<SOp> ops;
};

struct SBlock {
  std::vector<SIns> body;  // terminator appended last
};

struct SFunc {
  std::string name;
  int nslots = 0;
  int nparams = 0;
  std::vector<SBlock> blocks;
};

struct SProgram {
  std::vector<SFunc> funcs;
  std::unordered_map<std::string, int> func_index;
};

SProgram resolve(const Module& m, const UniformInfo* uniform) {
  SProgram p;
  for (size_t i = 0; i < m.functions.size(); ++i)
    p.func_index[m.functions[i].name] = static_cast<int>(i);
  for (auto& f : m.functions) {
    SFunc sf;
    sf.name = f.name;
    std::unordered_map<std::string, int> slot;
    auto slot_of = [&](const std::string& n) {
      auto it = slot.find(n);
      if (it != slot.end()) return it->second;
      int s = static_cast<int>(slot.size());
      slot[n] = s;
      return s;
    };
    for (auto& prm : f.params) slot_of(prm.name);
    sf.nparams = static_cast<int>(f.params.size());
    std::unordered_map<std::string, int> blocks;
    for (size_t bi = 0; bi < f.blocks.size(); ++bi) blocks[f.blocks[bi].label] = (int)bi;

    const std::unordered_set<std::string>* uset = nullptr;
    if (uniform) {
      auto it = uniform->values.find(f.name);
      if (it != uniform->values.end()) uset = &it->second;
    }
    auto sins = [&](const Instruction& ins) {
      SIns r;
      r.op = ins.op;
      r.icmp = ins.icmp;
      r.negate = ins.negate;
      if (ins.has_result()) {
        r.dst = slot_of(ins.result);
        r.dst_uniform = uset && uset->count(ins.result);
      }
      for (auto& o : ins.operands) {
        SOp ro;
        switch (o.kind) {
          case Operand::Kind::Value: ro.kind = SOp::K::Slot; ro.index = slot_of(o.name); break;
          case Operand::Kind::Label: ro.kind = SOp::K::Block; ro.index = blocks.at(o.name); break;
          case Operand::Kind::Func:
            ro.kind = SOp::K::Func;
            ro.index = p.func_index.count(o.name) ? p.func_index.at(o.name) : -1;
            break;
          case Operand::Kind::Imm: ro.kind = SOp::K::Imm; ro.imm = o.imm; break;
        }
        r.ops.push_back(ro);
      }
      return r;
    };
    for (auto& b : f.blocks) {
      SBlock sb;
      for (auto& i : b.body) sb.body.push_back(sins(i));
      sb.body.push_back(sins(b.term));
      sf.blocks.push_back(std::move(sb));
    }
    sf.nslots = static_cast<int>(slot.size());
    p.funcs.push_back(std::move(sf));
  }
  return p;
}

struct Frame {
  int func = 0;
  int block = 0;
  int pos = 0;
  int ret_dst = -1;
  size_t ipdom_floor = 0;
  std::vector<uint32_t> regs;  // slot-major: regs[slot * W + lane]
  // mask captured when an activemask instruction wrote a slot
  std::unordered_map<int, Mask> activemask_record;
};

struct IpdomEntry {
  enum class Kind { Unanimous, Divergent } kind = Kind::Unanimous;
  enum class Phase { AwaitingElse, ElseRunning } phase = Phase::AwaitingElse;
  Mask orig = 0;
  Mask else_mask = 0;
  int else_block = 0;
};

enum class WarpStatus { Active, AtBarrier, Halted, Dormant };

struct Warp {
  int wid = 0;
  WarpStatus status = WarpStatus::Dormant;
  Mask mask = 0;
  std::vector<Frame> frames;
  std::vector<IpdomEntry> ipdom;
  int barrier_id = 0;
};

struct SimAbort {
  SimResult::Status status;
  std::string message;
};

class Machine {
 public:
  Machine(const Module& m, const PipelineConfig& cfg, const std::vector<uint32_t>& args,
          const std::vector<uint32_t>& mem_init, const SimOptions& opts)
      : prog_(resolve(m, opts.uniform)), cfg_(cfg), opts_(opts), args_(args) {
    kernel_ = prog_.func_index.at(m.kernel()->name);
    W_ = cfg.warp_size;
    full_mask_ = W_ == 64 ? ~0ull : ((1ull << W_) - 1);
    memory_.assign(cfg.mem_words, 0);
    for (size_t i = 0; i < mem_init.size() && i < memory_.size(); ++i)
      memory_[i] = mem_init[i];
    metrics_.warp_size = W_;
    warps_.resize(cfg.warp_count);
    for (int w = 0; w < cfg.warp_count; ++w) warps_[w].wid = w;
    if (opts.launch == LaunchMode::Kernel) {
      for (auto& w : warps_) start_warp(w, kernel_, full_mask_);
    } else {
      start_warp(warps_[0], kernel_, 1);
    }
    rets_.assign(cfg.total_threads(), 0);
  }

  SimResult run() {
    SimResult res;
    try {
      loop();
      res.status = SimResult::Status::Ok;
    } catch (const SimAbort& a) {
      res.status = a.status;
      res.error = a.message;
    }
    res.memory = std::move(memory_);
    res.rets = std::move(rets_);
    res.metrics = metrics_;
    res.invariant_violations = std::move(violations_);
    return res;
  }

 private:
  void start_warp(Warp& w, int func, Mask mask) {
    w.status = WarpStatus::Active;
    w.mask = mask;
    w.frames.clear();
    w.ipdom.clear();
    Frame fr;
    fr.func = func;
    fr.regs.assign(static_cast<size_t>(prog_.funcs[func].nslots) * W_, 0);
    for (size_t a = 0; a < args_.size() && a < (size_t)prog_.funcs[func].nparams; ++a)
      for (int l = 0; l < W_; ++l) fr.regs[a * W_ + l] = args_[a];
    w.frames.push_back(std::move(fr));
  }

  void loop() {
    for (;;) {
      bool any_active = false;
      for (auto& w : warps_) {
        if (w.status != WarpStatus::Active) continue;
        any_active = true;
        step_warp(w);
      }
      if (any_active) continue;
      bool waiting = false;
      for (auto& w : warps_)
        if (w.status == WarpStatus::AtBarrier) waiting = true;
      if (waiting)
        throw SimAbort{SimResult::Status::RuntimeError,
                       "deadlock: warps blocked at an unsatisfiable barrier"};
      return;  // all halted or dormant
    }
  }

  [[noreturn]] void fault(const Warp& w, const std::string& msg) {
    throw SimAbort{SimResult::Status::RuntimeError,
                   "warp " + std::to_string(w.wid) + ": " + msg};
  }

  void note_violation(const Warp& w, const std::string& msg) {
    if (violations_.size() < 64)
      violations_.push_back("warp " + std::to_string(w.wid) + ": " + msg);
  }

  int lowest_lane(Mask m) const { return m == 0 ? -1 : __builtin_ctzll(m); }

  uint32_t warp_read(const Warp& w, const Frame& fr, int slot) const {
    int lane = lowest_lane(w.mask);
    return fr.regs[static_cast<size_t>(slot) * W_ + (lane < 0 ? 0 : lane)];
  }

  void write_lane(Frame& fr, int slot, int lane, uint32_t v) {
    fr.regs[static_cast<size_t>(slot) * W_ + lane] = v;
  }
  uint32_t read_lane(const Frame& fr, int slot, int lane) const {
    return fr.regs[static_cast<size_t>(slot) * W_ + lane];
  }

  void write_masked(Frame& fr, int slot, Mask m, const uint32_t* per_lane_vals) {
    for (int l = 0; l < W_; ++l)
      if (m & (1ull << l)) fr.regs[static_cast<size_t>(slot) * W_ + l] = per_lane_vals[l];
  }

  void uniformity_check(const Warp& w, const Frame& fr, const SIns& ins) {
    if (ins.dst < 0 || !ins.dst_uniform || w.mask == 0) return;
    int first = lowest_lane(w.mask);
    uint32_t v0 = read_lane(fr, ins.dst, first);
    for (int l = first + 1; l < W_; ++l)
      if ((w.mask >> l) & 1)
        if (read_lane(fr, ins.dst, l) != v0)
          throw SimAbort{SimResult::Status::UniformityViolation,
                         "warp " + std::to_string(w.wid) +
                             ": statically-uniform value diverged across lanes"};
  }

  void check_refinement(const Warp& w) {
    if (!opts_.check_invariants) return;
    for (auto& e : w.ipdom)
      if ((w.mask & ~e.orig) != 0) {
        note_violation(w, "mask escaped an enclosing reconvergence region");
        return;
      }
  }

  void enter_block(Warp& w, int target) {
    Frame& fr = w.frames.back();
    fr.block = target;
    fr.pos = 0;
  }

  void halt_warp(Warp& w) {
    if (opts_.check_invariants && !w.ipdom.empty())
      note_violation(w, "IPDOM stack not empty at halt");
    w.status = WarpStatus::Halted;
    w.mask = 0;
  }

  void step_warp(Warp& w) {
    Frame& fr = w.frames.back();
    const SFunc& f = prog_.funcs[fr.func];
    const SBlock& b = f.blocks[fr.block];
    const SIns& ins = b.body[fr.pos];

    if (++metrics_.dyn_instrs > cfg_.step_limit)
      fault(w, "step limit exceeded");
    metrics_.per_opcode[ins.op == Opcode::CondBr ? "br" : opcode_name(ins.op)] += 1;
    metrics_.active_lane_sum += static_cast<uint64_t>(__builtin_popcountll(w.mask));

    ++fr.pos;  // control-flow ops overwrite block/pos below
    exec(w, ins);

    if (w.status == WarpStatus::Active) {
      if (opts_.check_invariants) check_refinement(w);
    }
  }

  void exec(Warp& w, const SIns& ins) {
    Frame& fr = w.frames.back();
    uint32_t vals[64];
    auto eval_lane = [&](const SOp& o, int lane) -> uint32_t {
      return read_lane(fr, o.index, lane);
    };
    auto binary = [&](auto&& op2) {
      for (int l = 0; l < W_; ++l)
        if ((w.mask >> l) & 1)
          vals[l] = op2(eval_lane(ins.ops[0], l), eval_lane(ins.ops[1], l), l);
      write_masked(fr, ins.dst, w.mask, vals);
      uniformity_check(w, fr, ins);
    };
    auto nullary = [&](auto&& op0) {
      for (int l = 0; l < W_; ++l)
        if ((w.mask >> l) & 1) vals[l] = op0(l);
      write_masked(fr, ins.dst, w.mask, vals);
      uniformity_check(w, fr, ins);
    };

    switch (ins.op) {
      case Opcode::Add: binary([](uint32_t a, uint32_t b, int) { return a + b; }); break;
      case Opcode::Sub: binary([](uint32_t a, uint32_t b, int) { return a - b; }); break;
      case Opcode::Mul: binary([](uint32_t a, uint32_t b, int) { return a * b; }); break;
      case Opcode::Udiv:
        binary([&](uint32_t a, uint32_t b, int l) {
          if (b == 0) fault(w, "udiv by zero in lane " + std::to_string(l));
          return a / b;
        });
        break;
      case Opcode::And: binary([](uint32_t a, uint32_t b, int) { return a & b; }); break;
      case Opcode::Or: binary([](uint32_t a, uint32_t b, int) { return a | b; }); break;
      case Opcode::Xor: binary([](uint32_t a, uint32_t b, int) { return a ^ b; }); break;
      case Opcode::Shl: binary([](uint32_t a, uint32_t b, int) { return a << (b & 31); }); break;
      case Opcode::Shr: binary([](uint32_t a, uint32_t b, int) { return a >> (b & 31); }); break;
      case Opcode::Const:
        nullary([&](int) { return static_cast<uint32_t>(ins.ops[0].imm); });
        break;
      case Opcode::Icmp:
        binary([&](uint32_t a, uint32_t b, int) -> uint32_t {
          int32_t sa = static_cast<int32_t>(a), sb = static_cast<int32_t>(b);
          switch (ins.icmp) {
            case IcmpPred::Eq: return a == b;
            case IcmpPred::Ne: return a != b;
            case IcmpPred::Slt: return sa < sb;
            case IcmpPred::Sle: return sa <= sb;
            case IcmpPred::Sgt: return sa > sb;
            case IcmpPred::Sge: return sa >= sb;
            case IcmpPred::Ult: return a < b;
          }
          return 0;
        });
        break;
      case Opcode::Cmov:
        for (int l = 0; l < W_; ++l)
          if ((w.mask >> l) & 1)
            vals[l] = eval_lane(ins.ops[0], l) ? eval_lane(ins.ops[1], l)
                                               : eval_lane(ins.ops[2], l);
        write_masked(fr, ins.dst, w.mask, vals);
        uniformity_check(w, fr, ins);
        break;
      case Opcode::Mov:
        nullary([&](int l) { return eval_lane(ins.ops[0], l); });
        break;
      case Opcode::Tid:
        nullary([&](int l) { return static_cast<uint32_t>(w.wid * W_ + l); });
        break;
      case Opcode::Ntid:
        nullary([&](int) { return static_cast<uint32_t>(cfg_.total_threads()); });
        break;
      case Opcode::Wid:
        nullary([&](int) { return static_cast<uint32_t>(w.wid); });
        break;
      case Opcode::Nwid:
        nullary([&](int) { return static_cast<uint32_t>(cfg_.warp_count); });
        break;
      case Opcode::Coreid:
        nullary([&](int) { return 0u; });
        break;
      case Opcode::Load:
        nullary([&](int l) -> uint32_t {
          uint32_t p = eval_lane(ins.ops[0], l);
          if (p >= memory_.size())
            fault(w, "load out of bounds at word " + std::to_string(p));
          return memory_[p];
        });
        break;
      case Opcode::Store:
        for (int l = 0; l < W_; ++l)
          if ((w.mask >> l) & 1) {
            uint32_t v = eval_lane(ins.ops[0], l);
            uint32_t p = eval_lane(ins.ops[1], l);
            if (p >= memory_.size())
              fault(w, "store out of bounds at word " + std::to_string(p));
            memory_[p] = v;
          }
        break;
      case Opcode::AddrAdd:
        binary([](uint32_t a, uint32_t b, int) { return a + b; });
        break;
      case Opcode::AtomicAdd:
        // ascending lane order within the warp
        for (int l = 0; l < W_; ++l)
          if ((w.mask >> l) & 1) {
            uint32_t p = eval_lane(ins.ops[0], l);
            if (p >= memory_.size())
              fault(w, "atomic_add out of bounds at word " + std::to_string(p));
            uint32_t old = memory_[p];
            memory_[p] = old + eval_lane(ins.ops[1], l);
            vals[l] = old;
          }
        write_masked(fr, ins.dst, w.mask, vals);
        break;
      case Opcode::VoteAll:
      case Opcode::VoteAny:
      case Opcode::VoteBallot: {
        uint32_t all = 1, any = 0, ballot = 0;
        for (int l = 0; l < W_; ++l)
          if ((w.mask >> l) & 1) {
            uint32_t c = eval_lane(ins.ops[0], l);
            if (c) {
              any = 1;
              ballot |= (1u << l);
            } else {
              all = 0;
            }
          }
        uint32_t r = ins.op == Opcode::VoteAll ? all
                     : ins.op == Opcode::VoteAny ? any
                                                 : ballot;
        nullary([&](int) { return r; });
        break;
      }
      case Opcode::Shfl:
        nullary([&](int l) -> uint32_t {
          uint32_t lane = eval_lane(ins.ops[1], l);
          if (lane >= static_cast<uint32_t>(W_)) return 0;
          if (((w.mask >> lane) & 1) == 0) return 0;
          return eval_lane(ins.ops[0], static_cast<int>(lane));
        });
        break;
      case Opcode::AssumeUniform: {
        // dynamic check of the annotation over active lanes
        if (w.mask != 0) {
          int first = lowest_lane(w.mask);
          uint32_t v0 = eval_lane(ins.ops[0], first);
          for (int l = first + 1; l < W_; ++l)
            if ((w.mask >> l) & 1 && eval_lane(ins.ops[0], l) != v0)
              throw SimAbort{SimResult::Status::UniformityViolation,
                             "warp " + std::to_string(w.wid) +
                                 ": assume_uniform value diverged across lanes"};
        }
        break;
      }
      case Opcode::Call: {
        int callee = ins.ops[0].index;
        if (callee < 0) fault(w, "call to unknown function");
        if (w.frames.size() >= 64) fault(w, "call stack overflow");
        Frame nf;
        nf.func = callee;
        nf.ret_dst = ins.dst;
        nf.ipdom_floor = w.ipdom.size();
        nf.regs.assign(static_cast<size_t>(prog_.funcs[callee].nslots) * W_, 0);
        for (size_t a = 1; a < ins.ops.size(); ++a)
          for (int l = 0; l < W_; ++l)
            if ((w.mask >> l) & 1)
              nf.regs[(a - 1) * W_ + l] = eval_lane(ins.ops[a], l);
        w.frames.push_back(std::move(nf));
        break;
      }
      case Opcode::Barrier: {
        int id = static_cast<int>(ins.ops[0].imm);
        int k = static_cast<int>(ins.ops[1].imm);
        if (k > cfg_.warp_count)
          fault(w, "barrier warp count " + std::to_string(k) + " exceeds launch");
        metrics_.barriers_hit += 1;
        w.status = WarpStatus::AtBarrier;
        w.barrier_id = id;
        int arrived = 0;
        for (auto& o : warps_)
          if (o.status == WarpStatus::AtBarrier && o.barrier_id == id) ++arrived;
        if (arrived >= k) {
          for (auto& o : warps_)
            if (o.status == WarpStatus::AtBarrier && o.barrier_id == id)
              o.status = WarpStatus::Active;
        }
        break;
      }
      case Opcode::Split: {
        metrics_.splits_executed += 1;
        Mask m = w.mask;
        Mask t = 0;
        for (int l = 0; l < W_; ++l)
          if ((m >> l) & 1) {
            bool c = eval_lane(ins.ops[0], l) != 0;
            if (c != ins.negate) t |= (1ull << l);
          }
        Mask e = m & ~t;
        IpdomEntry entry;
        entry.orig = m;
        if (t == 0 || e == 0) {
          entry.kind = IpdomEntry::Kind::Unanimous;
        } else {
          entry.kind = IpdomEntry::Kind::Divergent;
          entry.else_mask = e;
          entry.phase = IpdomEntry::Phase::AwaitingElse;
          // else lanes resume at the false target of the adjacent branch
          const SBlock& blk = prog_.funcs[fr.func].blocks[fr.block];
          const SIns& term = blk.body.back();
          if (term.op != Opcode::CondBr)
            fault(w, "split without an adjacent conditional branch");
          entry.else_block = term.ops[2].index;
        }
        w.ipdom.push_back(entry);
        metrics_.max_ipdom_depth =
            std::max(metrics_.max_ipdom_depth, (uint64_t)w.ipdom.size());
        uint32_t token = static_cast<uint32_t>(w.ipdom.size());
        nullary([&](int) { return token; });
        if (entry.kind == IpdomEntry::Kind::Divergent) w.mask = t;
        break;
      }
      case Opcode::Join: {
        uint32_t tok = warp_read(w, fr, ins.ops[0].index);
        size_t depth = w.ipdom.size();
        if (tok == 0) break;  // token never assigned on this path: no-op
        if (depth == 0) fault(w, "join on empty IPDOM stack");
        if (tok > depth) break;  // entry already popped: no-op
        if (tok < depth)
          fault(w, "join token " + std::to_string(tok) + " does not match stack depth " +
                       std::to_string(depth));
        metrics_.joins_executed += 1;
        IpdomEntry& top = w.ipdom.back();
        if (top.kind == IpdomEntry::Kind::Unanimous) {
          if (opts_.check_invariants && w.mask != top.orig)
            note_violation(w, "mask at unanimous join differs from split mask");
          w.mask = top.orig;
          w.ipdom.pop_back();
          break;
        }
        if (top.phase == IpdomEntry::Phase::AwaitingElse) {
          if (opts_.check_invariants && w.mask != (top.orig & ~top.else_mask))
            note_violation(w, "first-arm mask not restored before join");
          top.phase = IpdomEntry::Phase::ElseRunning;
          w.mask = top.else_mask;
          Frame& cur = w.frames.back();
          cur.block = top.else_block;
          cur.pos = 0;
        } else {
          if (opts_.check_invariants && w.mask != top.else_mask)
            note_violation(w, "else-arm mask not restored before join");
          w.mask = top.orig;
          w.ipdom.pop_back();
        }
        break;
      }
      case Opcode::Pred: {
        metrics_.preds_executed += 1;
        Mask n = 0;
        for (int l = 0; l < W_; ++l)
          if ((w.mask >> l) & 1)
            if (eval_lane(ins.ops[0], l)) n |= (1ull << l);
        if (n != 0) {
          w.mask = n;
          enter_block(w, ins.ops[2].index);
        } else {
          uint32_t m0 = warp_read(w, fr, ins.ops[1].index);
          Mask restored = static_cast<Mask>(m0);
          if (opts_.check_invariants) {
            auto it = fr.activemask_record.find(ins.ops[1].index);
            if (it != fr.activemask_record.end() && it->second != restored)
              note_violation(w, "loop-exit mask differs from preheader mask");
          }
          w.mask = restored;
          enter_block(w, ins.ops[3].index);
          if (w.mask == 0) halt_warp(w);
        }
        break;
      }
      case Opcode::Tmc: {
        uint32_t m = warp_read(w, fr, ins.ops[0].index);
        if (opts_.check_invariants) {
          auto it = fr.activemask_record.find(ins.ops[0].index);
          if (it != fr.activemask_record.end() && it->second != static_cast<Mask>(m))
            note_violation(w, "loop-exit mask differs from preheader mask");
        }
        w.mask = static_cast<Mask>(m) & full_mask_;
        if (w.mask == 0) halt_warp(w);
        break;
      }
      case Opcode::Activemask: {
        uint32_t m = static_cast<uint32_t>(w.mask);
        nullary([&](int) { return m; });
        fr.activemask_record[ins.dst] = w.mask;
        break;
      }
      case Opcode::Wspawn: {
        uint32_t n = warp_read(w, fr, ins.ops[0].index);
        int func = ins.ops[1].index;
        if (func < 0) fault(w, "wspawn of unknown function");
        uint32_t limit = std::min<uint32_t>(n, static_cast<uint32_t>(cfg_.warp_count));
        for (uint32_t i = 1; i < limit; ++i)
          if (warps_[i].status == WarpStatus::Dormant) start_warp(warps_[i], func, 1);
        break;
      }
      case Opcode::Br:
        enter_block(w, ins.ops[0].index);
        break;
      case Opcode::CondBr: {
        // Active lanes agree on every pipeline-produced branch; perturbed
        // code may disagree, in which case the lowest active lane decides.
        int lane = lowest_lane(w.mask);
        uint32_t c = lane < 0 ? 0 : eval_lane(ins.ops[0], lane);
        enter_block(w, c ? ins.ops[1].index : ins.ops[2].index);
        break;
      }
      case Opcode::Ret: {
        uint32_t rv[64] = {0};
        if (!ins.ops.empty())
          for (int l = 0; l < W_; ++l)
            if ((w.mask >> l) & 1) rv[l] = eval_lane(ins.ops[0], l);
        size_t floor = fr.ipdom_floor;
        int ret_dst = fr.ret_dst;
        if (opts_.check_invariants && w.ipdom.size() != floor)
          note_violation(w, "IPDOM stack not balanced at function return");
        while (w.ipdom.size() > floor) w.ipdom.pop_back();
        if (w.frames.size() == 1) {
          for (int l = 0; l < W_; ++l)
            if ((w.mask >> l) & 1) rets_[w.wid * W_ + l] = rv[l];
          halt_warp(w);
          break;
        }
        w.frames.pop_back();
        if (ret_dst >= 0) {
          Frame& caller = w.frames.back();
          for (int l = 0; l < W_; ++l)
            if ((w.mask >> l) & 1) write_lane(caller, ret_dst, l, rv[l]);
        }
        break;
      }
      default:
        fault(w, std::string("opcode '") + opcode_name(ins.op) +
                     "' is not executable in the Lowered machine");
    }
  }

  SProgram prog_;
  PipelineConfig cfg_;
  SimOptions opts_;
  std::vector<uint32_t> args_;
  int kernel_ = 0;
  int W_ = 0;
  Mask full_mask_ = 0;
  std::vector<uint32_t> memory_;
  std::vector<Warp> warps_;
  std::vector<uint32_t> rets_;
  MetricsReport metrics_;
  std::vector<std::string> violations_;
};

}  // namespace

std::string metrics_to_json(const MetricsReport& m) {
  std::ostringstream os;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", m.simd_efficiency());
  os << "{";
  os << "\"barriers_hit\": " << m.barriers_hit << ", ";
  os << "\"dyn_instrs\": " << m.dyn_instrs << ", ";
  os << "\"joins_executed\": " << m.joins_executed << ", ";
  os << "\"max_ipdom_depth\": " << m.max_ipdom_depth << ", ";
  os << "\"per_opcode\": {";
  bool first = true;
  for (auto& [k, v] : m.per_opcode) {
    if (!first) os << ", ";
    first = false;
    os << "\"" << k << "\": " << v;
  }
  os << "}, ";
  os << "\"preds_executed\": " << m.preds_executed << ", ";
  os << "\"simd_efficiency\": " << buf << ", ";
  os << "\"splits_executed\": " << m.splits_executed << "}";
  return os.str();
}

SimResult run_simt(const Module& m, const PipelineConfig& cfg,
                   const std::vector<uint32_t>& args,
                   const std::vector<uint32_t>& mem_init, const SimOptions& opts) {
  if (m.stage != Stage::Lowered) {
    SimResult r;
    r.status = SimResult::Status::RuntimeError;
    r.error = "lockstep simulation requires a Lowered-stage module";
    return r;
  }
  if (!m.kernel()) {
    SimResult r;
    r.status = SimResult::Status::RuntimeError;
    r.error = "module has no kernel";
    return r;
  }
  return Machine(m, cfg, args, mem_init, opts).run();
}

}  // namespace simtforge
