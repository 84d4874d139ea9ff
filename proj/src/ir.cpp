#include "simtforge/ir.hpp"

#include <unordered_set>

namespace simtforge {

std::vector<std::string> successors(const Instruction& term) {
  std::vector<std::string> out;
  switch (term.op) {
    case Opcode::Br:
      out.push_back(term.operands[0].name);
      break;
    case Opcode::CondBr:
      out.push_back(term.operands[1].name);
      out.push_back(term.operands[2].name);
      break;
    case Opcode::Pred:
      out.push_back(term.operands[2].name);
      out.push_back(term.operands[3].name);
      break;
    case Opcode::Ret:
      break;
    default:
      break;
  }
  return out;
}

bool is_terminator(Opcode op) {
  return op == Opcode::Br || op == Opcode::CondBr || op == Opcode::Ret ||
         op == Opcode::Pred;
}

bool is_divergence_op(Opcode op) {
  switch (op) {
    case Opcode::Split:
    case Opcode::Join:
    case Opcode::Pred:
    case Opcode::Tmc:
    case Opcode::Activemask:
    case Opcode::Wspawn:
    case Opcode::Cmov:
    case Opcode::Mov:
      return true;
    default:
      return false;
  }
}

bool is_high_only_op(Opcode op) {
  return op == Opcode::Phi || op == Opcode::Select;
}

const char* opcode_name(Opcode op) {
  switch (op) {
    case Opcode::Add: return "add";
    case Opcode::Sub: return "sub";
    case Opcode::Mul: return "mul";
    case Opcode::Udiv: return "udiv";
    case Opcode::And: return "and";
    case Opcode::Or: return "or";
    case Opcode::Xor: return "xor";
    case Opcode::Shl: return "shl";
    case Opcode::Shr: return "shr";
    case Opcode::Const: return "const";
    case Opcode::Icmp: return "icmp";
    case Opcode::Select: return "select";
    case Opcode::Phi: return "phi";
    case Opcode::Tid: return "tid";
    case Opcode::Ntid: return "ntid";
    case Opcode::Wid: return "wid";
    case Opcode::Nwid: return "nwid";
    case Opcode::Coreid: return "coreid";
    case Opcode::Load: return "load";
    case Opcode::Store: return "store";
    case Opcode::AddrAdd: return "addr.add";
    case Opcode::AtomicAdd: return "atomic_add";
    case Opcode::VoteAll: return "vote.all";
    case Opcode::VoteAny: return "vote.any";
    case Opcode::VoteBallot: return "vote.ballot";
    case Opcode::Shfl: return "shfl";
    case Opcode::Call: return "call";
    case Opcode::AssumeUniform: return "assume_uniform";
    case Opcode::Barrier: return "barrier";
    case Opcode::Split: return "split";
    case Opcode::Join: return "join";
    case Opcode::Pred: return "pred";
    case Opcode::Tmc: return "tmc";
    case Opcode::Activemask: return "activemask";
    case Opcode::Wspawn: return "wspawn";
    case Opcode::Cmov: return "cmov";
    case Opcode::Mov: return "mov";
    case Opcode::Br: return "br";
    case Opcode::CondBr: return "br";
    case Opcode::Ret: return "ret";
  }
  return "?";
}

const char* icmp_name(IcmpPred p) {
  switch (p) {
    case IcmpPred::Eq: return "eq";
    case IcmpPred::Ne: return "ne";
    case IcmpPred::Slt: return "slt";
    case IcmpPred::Sle: return "sle";
    case IcmpPred::Sgt: return "sgt";
    case IcmpPred::Sge: return "sge";
    case IcmpPred::Ult: return "ult";
  }
  return "?";
}

const char* type_name(ValueType t) {
  switch (t) {
    case ValueType::I32: return "i32";
    case ValueType::I1: return "i1";
    case ValueType::Addr: return "addr";
  }
  return "?";
}

static void collect_names(const Function& f, std::unordered_set<std::string>& values,
                          std::unordered_set<std::string>& labels) {
  for (auto& p : f.params) values.insert(p.name);
  for (auto& b : f.blocks) {
    labels.insert(b.label);
    for_each_instruction(b, [&](const Instruction& i) {
      if (i.has_result()) values.insert(i.result);
    });
  }
}

std::string Function::fresh_value(const std::string& base) const {
  std::unordered_set<std::string> values, labels;
  collect_names(*this, values, labels);
  if (!values.count(base)) return base;
  for (int i = 0;; ++i) {
    std::string c = base + "." + std::to_string(i);
    if (!values.count(c)) return c;
  }
}

std::string Function::fresh_label(const std::string& base) const {
  std::unordered_set<std::string> values, labels;
  collect_names(*this, values, labels);
  if (!labels.count(base)) return base;
  for (int i = 0;; ++i) {
    std::string c = base + "." + std::to_string(i);
    if (!labels.count(c)) return c;
  }
}

}  // namespace simtforge
