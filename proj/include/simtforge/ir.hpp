#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace simtforge {

// Two-stage opcode discipline: High is strict SSA with phi/select and no
// divergence-control opcodes; Lowered is machine-like (multiple assignment
// allowed) with split/join/pred/tmc/wspawn/cmov/mov and no phi/select.
enum class Stage { High, Lowered };

enum class ValueType { I32, I1, Addr };

enum class Linkage { Internal, External };

enum class Opcode {
  // arithmetic / logic
  Add, Sub, Mul, Udiv, And, Or, Xor, Shl, Shr,
  Const, Icmp, Select, Phi,
  // lane / launch identifiers
  Tid, Ntid, Wid, Nwid, Coreid,
  // memory
  Load, Store, AddrAdd, AtomicAdd,
  // warp intrinsics
  VoteAll, VoteAny, VoteBallot, Shfl,
  // calls & annotations
  Call, AssumeUniform, Barrier,
  // divergence control (Lowered only)
  Split, Join, Pred, Tmc, Activemask, Wspawn, Cmov, Mov,
  // terminators
  Br, CondBr, Ret,
};

enum class IcmpPred { Eq, Ne, Slt, Sle, Sgt, Sge, Ult };

struct Operand {
  enum class Kind { Value, Label, Imm, Func };
  Kind kind = Kind::Value;
  std::string name;   // Value / Label / Func
  int64_t imm = 0;    // Imm

  static Operand value(std::string n) { return {Kind::Value, std::move(n), 0}; }
  static Operand label(std::string n) { return {Kind::Label, std::move(n), 0}; }
  static Operand imm_of(int64_t v) { return {Kind::Imm, {}, v}; }
  static Operand func(std::string n) { return {Kind::Func, std::move(n), 0}; }

  bool operator==(const Operand& o) const {
    return kind == o.kind && name == o.name && imm == o.imm;
  }
};

struct Instruction {
  Opcode op = Opcode::Ret;
  std::string result;             // empty when the opcode produces no value
  std::vector<Operand> operands;  // phi: [val, label]*; call: [func, args...]
  IcmpPred icmp = IcmpPred::Eq;
  bool negate = false;            // split only ("split.neg")
  int line = 0;

  bool has_result() const { return !result.empty(); }
};

struct Param {
  std::string name;
  ValueType type = ValueType::I32;
  bool uniform_flag = false;
};

struct Block {
  std::string label;
  std::vector<Instruction> phis;
  std::vector<Instruction> body;
  Instruction term;
};

struct Function {
  std::string name;
  Linkage linkage = Linkage::External;
  bool is_kernel = false;
  std::vector<Param> params;
  std::vector<Block> blocks;

  int block_index(const std::string& label) const {
    for (size_t i = 0; i < blocks.size(); ++i)
      if (blocks[i].label == label) return static_cast<int>(i);
    return -1;
  }
  const Block* block(const std::string& label) const {
    int i = block_index(label);
    return i < 0 ? nullptr : &blocks[i];
  }
  Block* block(const std::string& label) {
    int i = block_index(label);
    return i < 0 ? nullptr : &blocks[i];
  }

  // Fresh identifiers for pass-created values and blocks.
  std::string fresh_value(const std::string& base) const;
  std::string fresh_label(const std::string& base) const;
};

struct Module {
  Stage stage = Stage::High;
  std::vector<Function> functions;

  const Function* function(const std::string& name) const {
    for (auto& f : functions)
      if (f.name == name) return &f;
    return nullptr;
  }
  Function* function(const std::string& name) {
    for (auto& f : functions)
      if (f.name == name) return &f;
    return nullptr;
  }
  const Function* kernel() const {
    for (auto& f : functions)
      if (f.is_kernel) return &f;
    return nullptr;
  }
};

// Terminator successor labels, in target order (CondBr: [true, false]).
std::vector<std::string> successors(const Instruction& term);

bool is_terminator(Opcode op);
bool is_divergence_op(Opcode op);   // Lowered-only opcodes
bool is_high_only_op(Opcode op);    // phi / select

const char* opcode_name(Opcode op);
const char* icmp_name(IcmpPred p);
const char* type_name(ValueType t);

// Per-value static type, resolved by the verifier's signature table.
// `const` literals are polymorphic: always i32-compatible, i1-compatible
// iff the literal is 0 or 1, addr-compatible always (a literal word index).
struct TypeInfo {
  ValueType type = ValueType::I32;
  bool is_const_literal = false;
  int64_t literal = 0;
};

// Iterates over every instruction of a block including phis and terminator.
template <typename FnT>
void for_each_instruction(const Block& b, FnT&& fn) {
  for (auto& p : b.phis) fn(p);
  for (auto& i : b.body) fn(i);
  fn(b.term);
}

template <typename FnT>
void for_each_instruction(const Function& f, FnT&& fn) {
  for (auto& b : f.blocks) {
    for (auto& p : b.phis) fn(p);
    for (auto& i : b.body) fn(i);
    fn(b.term);
  }
}

}  // namespace simtforge
