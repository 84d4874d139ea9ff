#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "simtforge/ir.hpp"

namespace simtforge {

enum class ViolationKind {
  DuplicateFunction,
  KernelCount,
  EntryPhi,
  DuplicateLabel,
  BadTerminator,
  UnknownLabel,
  PhiEdgeMismatch,
  MultipleDefinition,
  UndefinedUse,
  TypeMismatch,
  StageViolation,
  RetMismatch,
  BadCall,
  RecursionFromKernel,
  SplitNotAdjacent,
  SplitBranchMismatch,
};

struct Violation {
  ViolationKind kind;
  std::string function;  // empty for module-level
  std::string block;     // empty when not block-scoped
  std::string message;

  std::string str() const;
};

const char* violation_kind_name(ViolationKind k);

// Empty result iff the module satisfies every structural, SSA/assignment,
// type, and stage invariant. Violations are data, never exceptions.
std::vector<Violation> verify_module(const Module& m);

// Value compatibility masks resolved by the verifier's signature table.
// A value may be compatible with several types only when it is a literal
// (const 0/1 works as i1, any literal works as i32 or as an addr index).
struct TypeMask {
  bool i32 = false, i1 = false, addr = false;
  bool empty() const { return !i32 && !i1 && !addr; }
};

// Per-function value typing (params included). Only meaningful when the
// function has no type violations.
std::unordered_map<std::string, TypeMask> compute_value_types(const Function& f,
                                                              const Module& m);

// Resolves v through unambiguous copy chains (mov, xor-with-0) and negation
// steps (xor-with-1). Returns the chain root and parity (true = negated).
// Only follows values with exactly one definition in the function.
struct ChainRoot {
  std::string root;
  bool negated = false;
  bool resolved = false;
};
ChainRoot resolve_condition_chain(const Function& f, const std::string& value);

}  // namespace simtforge
