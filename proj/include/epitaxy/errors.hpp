#pragma once

#include <stdexcept>
#include <string>

namespace epitaxy {

/// Bad input: violated precondition, malformed config, inconsistent shapes.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A numerical procedure could not produce a trustworthy answer.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SolverFailure : public NumericalError {
 public:
  SolverFailure(const std::string& what, double residual, int iterations)
      : NumericalError(what), residual_(residual), iterations_(iterations) {}
  double residual() const { return residual_; }
  int iterations() const { return iterations_; }

 private:
  double residual_;
  int iterations_;
};

inline void require(bool cond, const std::string& message) {
  if (!cond) throw InvalidInput(message);
}

}  // namespace epitaxy
