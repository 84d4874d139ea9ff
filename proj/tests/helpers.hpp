#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "simtforge/parser.hpp"
#include "simtforge/verifier.hpp"

namespace testutil {

inline std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), "cannot open " << path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline simtforge::Module parse_text(const std::string& text) {
  simtforge::ParseResult r = simtforge::parse_module(text);
  REQUIRE_MESSAGE(r.ok(), r.error.str());
  return *r.module;
}

inline simtforge::Module load(const std::string& path) {
  return parse_text(slurp(path));
}

inline std::vector<std::string> corpus_files() {
  std::vector<std::string> out;
  for (auto& e : std::filesystem::directory_iterator(KERNELS_DIR))
    if (e.path().extension() == ".vir") out.push_back(e.path().string());
  std::sort(out.begin(), out.end());
  return out;
}

inline void require_verified(const simtforge::Module& m) {
  auto v = simtforge::verify_module(m);
  for (auto& x : v) MESSAGE(x.str());
  REQUIRE(v.empty());
}

}  // namespace testutil
