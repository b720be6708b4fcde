#pragma once

// Shared solver configuration.  Defaults are the settings used throughout the
// reference experiments: relaxation 0.8, detection threshold 0.8, projection
// depth 5, relative residual tolerance 1e-10.

#include <cstddef>
#include <cstdint>
#include <stdexcept>

#include "relgrad/lanczos.hpp"

namespace relgrad {

struct SolverConfig {
  double sigma = 0.8;        // relaxation factor, in (0, 2)
  double eps_eig = 0.8;      // eigenvector-detection threshold, positive
  std::size_t lanczos_m = 5; // projection depth cap, at least 1
  AdaptivePolicy adaptive_policy{};  // none: fixed-depth projections
  double rel_tol = 1.0e-10;  // quadratic stopping: ||r_k|| <= rel_tol * ||r_0||
  double grad_tol = 1.0e-10; // convex stopping: ||g_k|| <= grad_tol (absolute)
  std::size_t max_iter = 100000;
  std::uint64_t seed = 0;    // stream for any in-run randomness (damping draws)

  void validate() const {
    if (!(sigma > 0.0 && sigma < 2.0))
      throw std::invalid_argument("SolverConfig: sigma must lie in (0, 2)");
    if (!(eps_eig > 0.0 && eps_eig < 1.0))
      throw std::invalid_argument("SolverConfig: eps_eig must lie in (0, 1)");
    if (lanczos_m == 0)
      throw std::invalid_argument("SolverConfig: lanczos_m must be at least 1");
    if (!(rel_tol > 0.0))
      throw std::invalid_argument("SolverConfig: rel_tol must be positive");
    if (!(grad_tol > 0.0))
      throw std::invalid_argument("SolverConfig: grad_tol must be positive");
    adaptive_policy.validate();
  }
};

}  // namespace relgrad
