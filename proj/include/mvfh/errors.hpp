#pragma once

#include <stdexcept>
#include <string>

namespace mvfh {

// Bad inputs: malformed files, dimension mismatches, invariant violations.
// The CLI maps these to exit code 2.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Numerical failures at run time (Cholesky breakdown, non-finite densities).
// The CLI maps these to exit code 1.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace mvfh
