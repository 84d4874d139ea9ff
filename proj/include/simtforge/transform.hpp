#pragma once

#include <stdexcept>
#include <string>
#include <unordered_map>

#include "simtforge/ir.hpp"

namespace simtforge {

// Instruction-count accounting per pass; the pipeline checks
// post == pre + inserted - removed.
struct PassStats {
  int inserted = 0;
  int removed = 0;
};

struct PassError : std::runtime_error {
  std::string pass;
  PassError(std::string pass_name, const std::string& msg)
      : std::runtime_error(msg), pass(std::move(pass_name)) {}
};

struct StructurizeError : PassError {
  explicit StructurizeError(const std::string& msg) : PassError("structurize", msg) {}
};

// Rewrites every value-operand reference (phi incomings included).
void replace_uses(Function& f, const std::string& from, const std::string& to);

// Rewrites branch/pred targets of a terminator.
void retarget(Instruction& term, const std::string& from, const std::string& to);

// Phi helpers.
void phi_remove_incoming(Instruction& phi, const std::string& label);
const Operand* phi_incoming(const Instruction& phi, const std::string& label);
void phi_set_incoming_label(Instruction& phi, const std::string& from,
                            const std::string& to);

int count_instructions(const Function& f);
int count_instructions(const Module& m);

// Deep copy of a block with every defined value renamed through `rename`
// (callers pre-populate it with fresh names for each def in the source).
Block clone_block(const Block& src, const std::string& new_label,
                  const std::unordered_map<std::string, std::string>& rename);

}  // namespace simtforge
