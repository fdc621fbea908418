#pragma once

#include <stdexcept>
#include <string>

namespace evf {

// Bad input data: malformed files, inconsistent ids, infeasible requests.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid invocation or configuration (bad flag values, unknown enum names).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An iterative solver ran out of iterations.
class ConvergenceError : public std::runtime_error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : std::runtime_error(what + " (residual " + std::to_string(residual) + ")"), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

}  // namespace evf
