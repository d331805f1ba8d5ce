#pragma once

#include <stdexcept>
#include <string>

namespace tpf {

// Bad arguments or misuse of the library / CLI (exit code 2 in the tool).
struct usage_error : std::invalid_argument {
  explicit usage_error(const std::string& msg) : std::invalid_argument(msg) {}
};

// Unreadable, unwritable or malformed input/output files (exit code 3).
struct io_error : std::runtime_error {
  explicit io_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Numerical failure: non-finite values, indefinite matrices, degenerate
// rates and the like (exit code 4).
struct numeric_error : std::runtime_error {
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace tpf
