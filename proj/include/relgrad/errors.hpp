#pragma once

// Error types thrown by the iterative solvers.  Argument/contract violations
// use std::invalid_argument directly; these classes mark *numerical* failures
// discovered mid-run, and carry the iteration index at which the run died.

#include <cstddef>
#include <stdexcept>
#include <string>

namespace relgrad {

class NumericalFailure : public std::runtime_error {
 public:
  NumericalFailure(const std::string& what, std::size_t iteration)
      : std::runtime_error(what + " (iteration " + std::to_string(iteration) + ")"),
        iteration_(iteration) {}

  std::size_t iteration() const { return iteration_; }

 private:
  std::size_t iteration_;
};

// The backtracking loop exceeded its safeguard cap without acceptance.
class LineSearchFailure : public NumericalFailure {
 public:
  LineSearchFailure(const std::string& what, std::size_t iteration)
      : NumericalFailure(what, iteration) {}
};

}  // namespace relgrad
