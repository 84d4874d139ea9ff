#pragma once

#include <optional>
#include <string>

#include "simtforge/ir.hpp"

namespace simtforge {

struct ParseError {
  int line = 0;
  int col = 0;
  std::string message;

  std::string str() const {
    return "parse error at " + std::to_string(line) + ":" + std::to_string(col) +
           ": " + message;
  }
};

struct ParseResult {
  std::optional<Module> module;
  ParseError error;
  bool ok() const { return module.has_value(); }
};

// Parses the textual .vir form. Diagnostics carry line/column; the first
// error aborts the parse. '#' starts a line comment.
ParseResult parse_module(const std::string& text);

}  // namespace simtforge
