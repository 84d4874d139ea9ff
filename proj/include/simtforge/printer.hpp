#pragma once

#include <string>

#include "simtforge/ir.hpp"

namespace simtforge {

// Canonical text form. parse(print(m)) is structurally the identity and
// print(parse(print(m))) == print(m); the printer reuses original names.
std::string print_module(const Module& m);
std::string print_instruction(const Instruction& ins);

}  // namespace simtforge
