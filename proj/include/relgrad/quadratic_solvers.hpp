#pragma once

// Relaxed gradient-type solvers for SPD linear systems, with eigenvector
// detection and two acceleration modes.
//
// The common skeleton: iterate x' = x + tau * alpha * r with the
// steepest-descent or minimal-residual steplength alpha and a fixed
// relaxation tau = sigma in (0, 2).  Under-relaxation turns the residual
// iteration into a shifted power method that funnels the residual toward an
// extreme eigenvector; the detection quantity |alpha| * ||rho|| (rho the
// normalized eigenvector residual of r) measures how far that funneling has
// progressed.  When it drops below a threshold, one of:
//   * optimal step: a single full (tau = 1) step, which then contracts the
//     residual by exactly that detection factor;
//   * Lanczos projection: a least-squares residual projection onto a small
//     Krylov space built from r, reusing the extended tridiagonal so the
//     update costs only the factorization's own products.
// A third variant replaces the plain relaxed step with a randomly damped
// Jacobi step (bi-space smoothing) while keeping the same projection trigger.
//
// Cost accounting contract: a run resets the operator counter, spends one
// product on the initial r -> A r, one per outer iteration, plus the
// projection sizes; the damped-Jacobi smoother spends one extra product per
// plain step.  The initial residual b - A x0 is formed with an unrecorded
// apply (setup, not iteration work).

#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "relgrad/config.hpp"
#include "relgrad/errors.hpp"
#include "relgrad/lanczos.hpp"
#include "relgrad/operator.hpp"
#include "relgrad/rng.hpp"
#include "relgrad/trace.hpp"
#include "relgrad/vector_ops.hpp"

namespace relgrad {

enum class GradientMethod { steepest_descent, minimal_residual };

// Steepest-descent steplength g'g / g'Ag.
inline double steplength_sd(std::span<const double> g, std::span<const double> ag) {
  const double gg = dot(g, g);
  if (!(gg > 0.0)) throw std::invalid_argument("steplength_sd: zero gradient");
  const double gag = dot(g, ag);
  if (!(gag > 0.0))
    throw std::invalid_argument("steplength_sd: curvature along g is not positive");
  return gg / gag;
}

// Minimal-residual steplength g'Ag / g'A'Ag.
inline double steplength_mr(std::span<const double> g, std::span<const double> ag) {
  if (!(dot(g, g) > 0.0)) throw std::invalid_argument("steplength_mr: zero gradient");
  const double gag = dot(g, ag);
  const double agag = dot(ag, ag);
  if (!(gag > 0.0) || !(agag > 0.0))
    throw std::invalid_argument("steplength_mr: curvature along g is not positive");
  return gag / agag;
}

// Generalized power-quotient steplength (g'A^{p-1}g) / (g'A^p g).  p = 1 is
// steepest descent, p = 2 minimal residual.  Reuses the cached product ag and
// charges the counter for the p-1 further powers it has to form.
inline double steplength_generalized(const SymmetricOperator& op, std::span<const double> g,
                                     std::span<const double> ag, unsigned p) {
  if (p == 0) throw std::invalid_argument("steplength_generalized: p must be at least 1");
  if (!(dot(g, g) > 0.0)) throw std::invalid_argument("steplength_generalized: zero gradient");
  std::vector<double> prev(g.begin(), g.end());   // A^{p-1} g as the chain advances
  std::vector<double> cur(ag.begin(), ag.end());  // A^p g
  for (unsigned k = 2; k <= p; ++k) {
    prev = std::move(cur);
    cur = op.apply(prev);
  }
  const double num = dot(g, prev);
  const double den = dot(g, cur);
  if (!(num > 0.0) || !(den > 0.0))
    throw std::invalid_argument("steplength_generalized: curvature along g is not positive");
  return num / den;
}

// Detection quantity |alpha| * ||(A - alpha^{-1} I) g|| / ||g||, from the
// cached product ag.  Vanishes exactly when g is an eigenvector with
// eigenvalue 1/alpha; a full steplength-alpha step contracts ||g|| by this
// factor, which is what makes it the acceleration trigger.
inline double eig_residual(std::span<const double> g, std::span<const double> ag,
                           double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("eig_residual: alpha must be positive");
  check_same_size(g, ag, "eig_residual");
  const double gn = norm(g);
  if (!(gn > 0.0)) throw std::invalid_argument("eig_residual: zero gradient");
  double s = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double d = ag[i] - g[i] / alpha;
    s += d * d;
  }
  return alpha * std::sqrt(s) / gn;
}

// One damped-Jacobi smoothing step with a fixed damping coefficient:
// x' = x + damping * D^{-1} r,  r' = r - damping * A D^{-1} r.
// Costs one operator application.
inline void damped_jacobi_step(const SymmetricOperator& op, std::vector<double>& x,
                               std::vector<double>& r, std::span<const double> diag_entries,
                               double damping) {
  check_same_size(x, r, "damped_jacobi_step");
  check_same_size(r, diag_entries, "damped_jacobi_step");
  std::vector<double> d(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) d[i] = r[i] / diag_entries[i];
  const std::vector<double> ad = op.apply(d);
  axpy(damping, d, x);
  axpy(-damping, ad, r);
}

// Random-damping wrapper: draws damping ~ U[0, beta_max) and applies the
// step; returns the drawn coefficient.
inline double djm_step(const SymmetricOperator& op, std::vector<double>& x,
                       std::vector<double>& r, std::span<const double> diag_entries,
                       double beta_max, Pcg64& rng) {
  if (!(beta_max > 0.0)) throw std::invalid_argument("djm_step: beta_max must be positive");
  const double damping = rng.uniform(0.0, beta_max);
  damped_jacobi_step(op, x, r, diag_entries, damping);
  return damping;
}

// Called once per outer iteration with the current residual, before the step.
using IterationObserver = std::function<void(std::size_t, std::span<const double>)>;

namespace detail {

enum class SmootherKind { relaxed, damped_jacobi };
enum class AccelKind { none, optimal_step, lanczos };

struct QuadraticDriverSpec {
  GradientMethod method = GradientMethod::minimal_residual;
  SmootherKind smoother = SmootherKind::relaxed;
  AccelKind accel = AccelKind::none;
  double beta_max = 1.0;  // damping bound for the damped-Jacobi smoother
};

inline ConvergenceTrace run_quadratic_driver(const QuadraticProblem& problem,
                                             const QuadraticDriverSpec& drv,
                                             const SolverConfig& config,
                                             std::span<const double> x0,
                                             const IterationObserver& observer) {
  config.validate();
  const SymmetricOperator& op = problem.op;
  if (x0.size() != op.dim())
    throw std::invalid_argument("quadratic solver: x0 dimension mismatch");
  if (drv.smoother == SmootherKind::damped_jacobi && !(drv.beta_max > 0.0))
    throw std::invalid_argument("quadratic solver: beta_max must be positive");

  op.reset_matvec_count();
  Pcg64 rng(config.seed);
  std::vector<double> diag_entries;
  if (drv.smoother == SmootherKind::damped_jacobi) {
    diag_entries = op.diagonal_entries();
    for (double d : diag_entries)
      if (!(d > 0.0))
        throw std::invalid_argument("quadratic solver: damped Jacobi needs a positive diagonal");
  }

  // tau = 1 steps replace the m = 1 fixed-depth projection: a one-dimensional
  // residual projection along r is exactly the full minimal-residual step, so
  // this branch keeps the two formulations identical to the last bit.
  const bool one_dim_projection_as_step =
      drv.accel == AccelKind::lanczos && config.lanczos_m == 1 &&
      config.adaptive_policy.kind == AdaptivePolicy::Kind::none;

  std::vector<double> x(x0.begin(), x0.end());
  std::vector<double> r = subtract(problem.rhs, op.apply_unrecorded(x));
  const double r0_norm = norm(r);

  ConvergenceTrace trace;
  RunSummary& summary = trace.summary;
  bool converged = false;
  double rn = r0_norm;

  std::vector<double> p = op.apply(r);
  for (std::size_t k = 0;; ++k) {
    rn = norm(r);
    if (!std::isfinite(rn)) throw NumericalFailure("quadratic solver: non-finite residual", k);
    if (rn <= config.rel_tol * r0_norm || rn < 1.0e-300) {
      converged = true;
      break;
    }
    if (k >= config.max_iter) break;
    if (observer) observer(k, r);

    const double alpha = drv.method == GradientMethod::steepest_descent
                             ? steplength_sd(r, p)
                             : steplength_mr(r, p);
    const double detection = eig_residual(r, p, alpha);
    IterationRecord rec;
    rec.k = k;
    rec.residual_norm = rn;
    rec.steplength = alpha;
    rec.eig_residual = detection;

    const bool trigger = drv.accel != AccelKind::none && detection < config.eps_eig;
    if (trigger && drv.accel == AccelKind::lanczos && !one_dim_projection_as_step) {
      auto [fact, sol] =
          adaptive_lanczos(op, r, config.adaptive_policy, config.lanczos_m);
      std::vector<double> coeffs = fact.tridiag_times(sol.y);
      coeffs.resize(fact.basis.size());  // breakdown: the dropped tail is below threshold
      const std::vector<double> correction =
          fact.expand(std::span<const double>(sol.y.data(), sol.steps_used));
      const std::vector<double> residual_change = fact.expand(coeffs);
      axpy(1.0, correction, x);
      axpy(-1.0, residual_change, r);
      rec.event = StepEvent::lanczos_projection;
      rec.projection_size = sol.steps_used;
      ++summary.lanczos_calls;
    } else if (trigger) {
      axpy(alpha, r, x);
      axpy(-alpha, p, r);
      rec.event = StepEvent::optimal_step;
      rec.relaxation_used = 1.0;
    } else if (drv.smoother == SmootherKind::damped_jacobi) {
      rec.relaxation_used = djm_step(op, x, r, diag_entries, drv.beta_max, rng);
      rec.event = StepEvent::plain;
    } else {
      const double step = config.sigma * alpha;
      axpy(step, r, x);
      axpy(-step, p, r);
      rec.event = StepEvent::plain;
      rec.relaxation_used = config.sigma;
    }

    p = op.apply(r);
    rec.cumulative_matvecs = op.matvec_count();
    trace.records.push_back(rec);
  }

  summary.iterations = trace.records.size();
  summary.total_matvecs = op.matvec_count();
  summary.converged = converged;
  summary.final_residual_norm = rn;
  return trace;
}

}  // namespace detail

// Plain relaxed gradient iteration (no acceleration): x' = x + sigma*alpha*r.
inline ConvergenceTrace relaxed_gradient_run(const QuadraticProblem& problem,
                                             GradientMethod method, const SolverConfig& config,
                                             std::span<const double> x0,
                                             const IterationObserver& observer = {}) {
  detail::QuadraticDriverSpec drv;
  drv.method = method;
  drv.smoother = detail::SmootherKind::relaxed;
  drv.accel = detail::AccelKind::none;
  return detail::run_quadratic_driver(problem, drv, config, x0, observer);
}

// Minimal-residual relaxation with the eigenvector-detection trigger: plain
// steps use tau = sigma, detected steps use tau = 1.
inline ConvergenceTrace eigenvector_acceleration_run(const QuadraticProblem& problem,
                                                     const SolverConfig& config,
                                                     std::span<const double> x0,
                                                     const IterationObserver& observer = {}) {
  detail::QuadraticDriverSpec drv;
  drv.method = GradientMethod::minimal_residual;
  drv.smoother = detail::SmootherKind::relaxed;
  drv.accel = detail::AccelKind::optimal_step;
  return detail::run_quadratic_driver(problem, drv, config, x0, observer);
}

// Minimal-residual relaxation with Lanczos-subspace projections on detection.
inline ConvergenceTrace lba_run(const QuadraticProblem& problem, const SolverConfig& config,
                                std::span<const double> x0,
                                const IterationObserver& observer = {}) {
  detail::QuadraticDriverSpec drv;
  drv.method = GradientMethod::minimal_residual;
  drv.smoother = detail::SmootherKind::relaxed;
  drv.accel = detail::AccelKind::lanczos;
  return detail::run_quadratic_driver(problem, drv, config, x0, observer);
}

// Bi-space variant: randomly damped Jacobi smoothing steps (damping drawn
// from U[0, beta_max) using config.seed) with the same detection-triggered
// Lanczos projections.
inline ConvergenceTrace lba_djm_run(const QuadraticProblem& problem, const SolverConfig& config,
                                    double beta_max, std::span<const double> x0,
                                    const IterationObserver& observer = {}) {
  detail::QuadraticDriverSpec drv;
  drv.method = GradientMethod::minimal_residual;
  drv.smoother = detail::SmootherKind::damped_jacobi;
  drv.accel = detail::AccelKind::lanczos;
  drv.beta_max = beta_max;
  return detail::run_quadratic_driver(problem, drv, config, x0, observer);
}

// Worst-case single-step contraction factor of the relaxed minimal-residual
// iteration on a spectrum [lambda_min, lambda_max]:
// 1 - sigma(2-sigma) * 4 l1 ln / (l1+ln)^2, the bound every step obeys.
inline double mr_contraction_bound(double lambda_min, double lambda_max, double sigma) {
  if (!(lambda_min > 0.0) || !(lambda_max >= lambda_min))
    throw std::invalid_argument("mr_contraction_bound: need 0 < lambda_min <= lambda_max");
  if (!(sigma > 0.0 && sigma < 2.0))
    throw std::invalid_argument("mr_contraction_bound: sigma must lie in (0, 2)");
  const double s = lambda_min + lambda_max;
  return 1.0 - sigma * (2.0 - sigma) * 4.0 * lambda_min * lambda_max / (s * s);
}

}  // namespace relgrad
