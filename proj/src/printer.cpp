#include "simtforge/printer.hpp"

#include <sstream>

namespace simtforge {

namespace {

void print_operand(std::ostream& os, const Operand& o) {
  switch (o.kind) {
    case Operand::Kind::Value: os << '%' << o.name; break;
    case Operand::Kind::Label: os << '^' << o.name; break;
    case Operand::Kind::Func: os << '@' << o.name; break;
    case Operand::Kind::Imm: os << o.imm; break;
  }
}

void print_ins(std::ostream& os, const Instruction& ins) {
  if (ins.has_result()) os << '%' << ins.result << " = ";
  switch (ins.op) {
    case Opcode::Split:
      os << (ins.negate ? "split.neg" : "split");
      break;
    case Opcode::Icmp:
      os << "icmp " << icmp_name(ins.icmp);
      break;
    default:
      os << opcode_name(ins.op);
      break;
  }
  if (ins.op == Opcode::Phi) {
    for (size_t i = 0; i + 1 < ins.operands.size(); i += 2) {
      os << (i == 0 ? " [" : ", [");
      print_operand(os, ins.operands[i]);
      os << ", ";
      print_operand(os, ins.operands[i + 1]);
      os << ']';
    }
    return;
  }
  if (ins.op == Opcode::Call) {
    os << ' ';
    print_operand(os, ins.operands[0]);
    os << '(';
    for (size_t i = 1; i < ins.operands.size(); ++i) {
      if (i > 1) os << ", ";
      print_operand(os, ins.operands[i]);
    }
    os << ')';
    return;
  }
  for (size_t i = 0; i < ins.operands.size(); ++i) {
    os << (i == 0 ? " " : ", ");
    print_operand(os, ins.operands[i]);
  }
}

}  // namespace

std::string print_instruction(const Instruction& ins) {
  std::ostringstream os;
  print_ins(os, ins);
  return os.str();
}

std::string print_module(const Module& m) {
  std::ostringstream os;
  if (m.stage == Stage::Lowered) os << ".stage lowered\n";
  bool first = true;
  for (auto& f : m.functions) {
    if (!first) os << '\n';
    first = false;
    if (f.is_kernel) os << "kernel";
    else if (f.linkage == Linkage::Internal) os << "internal func";
    else os << "func";
    os << " @" << f.name << '(';
    for (size_t i = 0; i < f.params.size(); ++i) {
      if (i) os << ", ";
      os << '%' << f.params[i].name << ": " << type_name(f.params[i].type);
      if (f.params[i].uniform_flag) os << " uniform";
    }
    os << ") {\n";
    for (auto& b : f.blocks) {
      os << b.label << ":\n";
      for (auto& p : b.phis) {
        os << "  ";
        print_ins(os, p);
        os << '\n';
      }
      for (auto& i : b.body) {
        os << "  ";
        print_ins(os, i);
        os << '\n';
      }
      os << "  ";
      print_ins(os, b.term);
      os << '\n';
    }
    os << "}\n";
  }
  return os.str();
}

}  // namespace simtforge
