#include "simtforge/transform.hpp"

namespace simtforge {

void replace_uses(Function& f, const std::string& from, const std::string& to) {
  for (auto& b : f.blocks) {
    auto fix = [&](Instruction& ins) {
      for (auto& o : ins.operands)
        if (o.kind == Operand::Kind::Value && o.name == from) o.name = to;
    };
    for (auto& p : b.phis) fix(p);
    for (auto& i : b.body) fix(i);
    fix(b.term);
  }
}

void retarget(Instruction& term, const std::string& from, const std::string& to) {
  for (auto& o : term.operands)
    if (o.kind == Operand::Kind::Label && o.name == from) o.name = to;
}

void phi_remove_incoming(Instruction& phi, const std::string& label) {
  for (size_t i = 0; i + 1 < phi.operands.size(); i += 2)
    if (phi.operands[i + 1].name == label) {
      phi.operands.erase(phi.operands.begin() + i, phi.operands.begin() + i + 2);
      return;
    }
}

const Operand* phi_incoming(const Instruction& phi, const std::string& label) {
  for (size_t i = 0; i + 1 < phi.operands.size(); i += 2)
    if (phi.operands[i + 1].name == label) return &phi.operands[i];
  return nullptr;
}

void phi_set_incoming_label(Instruction& phi, const std::string& from,
                            const std::string& to) {
  for (size_t i = 1; i < phi.operands.size(); i += 2)
    if (phi.operands[i].name == from) phi.operands[i].name = to;
}

int count_instructions(const Function& f) {
  int n = 0;
  for_each_instruction(f, [&](const Instruction&) { ++n; });
  return n;
}

int count_instructions(const Module& m) {
  int n = 0;
  for (auto& f : m.functions) n += count_instructions(f);
  return n;
}

Block clone_block(const Block& src, const std::string& new_label,
                  const std::unordered_map<std::string, std::string>& rename) {
  Block b;
  b.label = new_label;
  auto fix = [&](Instruction ins) {
    if (ins.has_result()) {
      auto it = rename.find(ins.result);
      if (it != rename.end()) ins.result = it->second;
    }
    for (auto& o : ins.operands)
      if (o.kind == Operand::Kind::Value) {
        auto it = rename.find(o.name);
        if (it != rename.end()) o.name = it->second;
      }
    return ins;
  };
  for (auto& p : src.phis) b.phis.push_back(fix(p));
  for (auto& i : src.body) b.body.push_back(fix(i));
  b.term = fix(src.term);
  return b;
}

}  // namespace simtforge
