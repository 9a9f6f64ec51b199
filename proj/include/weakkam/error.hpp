#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace weakkam {

// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent user input (formulas, config keys, data).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A numerical routine could not deliver its postcondition.
class SolverError : public Error {
 public:
  using Error::Error;
};

// Stationary / fixed-point iteration ran out of horizon.
class ConvergenceError : public SolverError {
 public:
  ConvergenceError(const std::string& what, double last_residual)
      : SolverError(what), residual_(last_residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

}  // namespace weakkam
