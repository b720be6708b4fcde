#pragma once

// Per-iteration records and run summaries shared by every solver.  A record
// is written for each outer iteration that takes a step; the summary carries
// the totals the cost accounting is audited against.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace relgrad {

enum class StepEvent {
  plain,               // relaxed gradient (or damped-Jacobi) step
  optimal_step,        // detection fired: full (tau = 1) gradient step
  lanczos_projection,  // detection fired: Lanczos least-squares projection
};

inline const char* to_string(StepEvent e) {
  switch (e) {
    case StepEvent::plain: return "plain";
    case StepEvent::optimal_step: return "optimal_step";
    case StepEvent::lanczos_projection: return "lanczos_projection";
  }
  return "unknown";
}

struct IterationRecord {
  std::size_t k = 0;             // outer iteration index, 0-based
  double residual_norm = 0.0;    // ||r_k|| (quadratic) or ||g_k|| (convex), before the step
  double steplength = 0.0;       // alpha_k from the step-length rule
  // Relaxation actually applied: sigma for plain steps, 1 for optimal steps,
  // NaN for projections (no tau applies).  Damped-Jacobi plain steps store
  // the drawn damping coefficient instead.
  double relaxation_used = std::numeric_limits<double>::quiet_NaN();
  double eig_residual = 0.0;     // detection quantity |alpha_k| * ||rho_k||
  StepEvent event = StepEvent::plain;
  std::size_t projection_size = 0;  // Lanczos steps used when event is lanczos_projection
  std::uint64_t cumulative_matvecs = 0;
  std::uint64_t cumulative_grad_evals = 0;
  // Convex-only extras (NaN / zero on quadratic runs).
  double objective_value = std::numeric_limits<double>::quiet_NaN();
  double accepted_steplength = std::numeric_limits<double>::quiet_NaN();
  std::uint32_t backtracks = 0;
  double eta = std::numeric_limits<double>::quiet_NaN();
};

struct RunSummary {
  std::size_t iterations = 0;        // number of steps taken (= records)
  std::uint64_t total_matvecs = 0;
  std::uint64_t total_grad_evals = 0;
  std::size_t lanczos_calls = 0;     // projections performed
  std::uint64_t total_backtracks = 0;
  bool converged = false;
  double final_residual_norm = 0.0;
};

struct ConvergenceTrace {
  std::vector<IterationRecord> records;
  RunSummary summary;
};

}  // namespace relgrad
