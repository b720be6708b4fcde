#pragma once

// Extension of the relaxed minimal-residual scheme to smooth strictly convex
// minimization: finite-difference Hessian-vector products supply the
// curvature the steplength and detection rules need, and a nonmonotone
// backtracking line search guards every step.
//
// Cost model: gradient evaluations are the only significant cost.  A plain
// iteration spends exactly two (one at x_k, one inside the curvature probe);
// a Lanczos trigger spends one more per subspace dimension, because every
// application of the frozen Hessian map is one finite-difference probe.  The
// line search never evaluates the gradient.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "relgrad/config.hpp"
#include "relgrad/errors.hpp"
#include "relgrad/lanczos.hpp"
#include "relgrad/operator.hpp"
#include "relgrad/quadratic_solvers.hpp"
#include "relgrad/rng.hpp"
#include "relgrad/trace.hpp"
#include "relgrad/vector_ops.hpp"

namespace relgrad {

// A differentiable objective with a gradient-evaluation counter (the cost
// metric of the convex solvers) and an optional exact Hessian-vector product
// used only by validation code.
class ConvexObjective {
 public:
  using ValueFn = std::function<double(std::span<const double>)>;
  using GradFn = std::function<std::vector<double>(std::span<const double>)>;
  using HessVecFn =
      std::function<std::vector<double>(std::span<const double>, std::span<const double>)>;

  ConvexObjective(std::size_t dim, ValueFn value, GradFn gradient,
                  HessVecFn exact_hessian_vec = nullptr)
      : dim_(dim),
        value_(std::move(value)),
        gradient_(std::move(gradient)),
        exact_hessian_vec_(std::move(exact_hessian_vec)) {
    if (dim_ == 0) throw std::invalid_argument("ConvexObjective: dimension must be positive");
    if (!value_ || !gradient_)
      throw std::invalid_argument("ConvexObjective: value and gradient are required");
  }

  std::size_t dim() const { return dim_; }

  double value(std::span<const double> x) const {
    check_dim(x);
    return value_(x);
  }

  // Counted: one call = one gradient evaluation in the run summaries.
  std::vector<double> gradient(std::span<const double> x) const {
    check_dim(x);
    ++grad_evals_;
    return gradient_(x);
  }

  bool has_exact_hessian_vec() const { return static_cast<bool>(exact_hessian_vec_); }

  std::vector<double> exact_hessian_vec(std::span<const double> x,
                                        std::span<const double> v) const {
    if (!exact_hessian_vec_)
      throw std::invalid_argument("ConvexObjective: no exact Hessian-vector product");
    check_dim(x);
    check_dim(v);
    return exact_hessian_vec_(x, v);
  }

  std::uint64_t gradient_evals() const { return grad_evals_; }
  void reset_gradient_evals() const { grad_evals_ = 0; }

 private:
  void check_dim(std::span<const double> v) const {
    if (v.size() != dim_) throw std::invalid_argument("ConvexObjective: dimension mismatch");
  }

  std::size_t dim_;
  ValueFn value_;
  GradFn gradient_;
  HessVecFn exact_hessian_vec_;
  mutable std::uint64_t grad_evals_ = 0;
};

// f(x) = sum_i (i/10) (exp(x_i) - x_i), 1-based i; unique minimizer at 0.
// Components above 700 are flagged as overflow (+infinity) before exp can
// produce garbage; solvers surface that as a numerical failure.
inline ConvexObjective strictly_convex_2(std::size_t n) {
  if (n == 0) throw std::invalid_argument("strictly_convex_2: n must be positive");
  auto value = [](std::span<const double> x) {
    double f = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i] > 700.0) return std::numeric_limits<double>::infinity();
      f += (static_cast<double>(i + 1) / 10.0) * (std::exp(x[i]) - x[i]);
    }
    return f;
  };
  auto gradient = [](std::span<const double> x) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
      g[i] = x[i] > 700.0 ? std::numeric_limits<double>::infinity()
                          : (static_cast<double>(i + 1) / 10.0) * (std::exp(x[i]) - 1.0);
    return g;
  };
  auto hess_vec = [](std::span<const double> x, std::span<const double> v) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i)
      out[i] = (static_cast<double>(i + 1) / 10.0) * std::exp(x[i]) * v[i];
    return out;
  };
  return ConvexObjective(n, value, gradient, hess_vec);
}

// Regularized logistic loss
//   f(x) = (kappa/2)||x||^2 + sum_{i=1..p} log(1 + exp(-(x'z_i) y_i)),
// with seeded data: the z_i are standard-normal vectors (drawn first, in
// order), then the p labels y_i are fair +/-1 draws, all from one PCG64
// stream.  log1p/sigmoid evaluation is stabilized so large margins cannot
// overflow.
inline ConvexObjective logistic_loss(std::size_t n, std::size_t p, double kappa,
                                     std::uint64_t seed) {
  if (p == 0 || n <= p)
    throw std::invalid_argument("logistic_loss: need n > p >= 1");
  if (!(kappa > 0.0)) throw std::invalid_argument("logistic_loss: kappa must be positive");
  struct Data {
    std::vector<std::vector<double>> z;
    std::vector<double> y;
  };
  auto data = std::make_shared<Data>();
  Pcg64 rng(seed);
  data->z.resize(p);
  for (std::size_t i = 0; i < p; ++i) {
    data->z[i].resize(n);
    for (double& c : data->z[i]) c = rng.normal();
  }
  data->y.resize(p);
  for (double& label : data->y) label = rng.sign();

  // log(1 + exp(-t)) without overflow for any t.
  auto softplus_neg = [](double t) {
    return t >= 0.0 ? std::log1p(std::exp(-t)) : -t + std::log1p(std::exp(t));
  };
  // sigmoid(-t) = 1 / (1 + exp(t)) without overflow.
  auto sigmoid_neg = [](double t) {
    if (t >= 0.0) {
      const double e = std::exp(-t);
      return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(t));
  };

  auto value = [data, kappa, softplus_neg](std::span<const double> x) {
    double f = 0.5 * kappa * dot(x, x);
    for (std::size_t i = 0; i < data->z.size(); ++i)
      f += softplus_neg(dot(x, data->z[i]) * data->y[i]);
    return f;
  };
  auto gradient = [data, kappa, sigmoid_neg](std::span<const double> x) {
    std::vector<double> g = scaled(x, kappa);
    for (std::size_t i = 0; i < data->z.size(); ++i) {
      const double margin = dot(x, data->z[i]) * data->y[i];
      axpy(-data->y[i] * sigmoid_neg(margin), data->z[i], g);
    }
    return g;
  };
  auto hess_vec = [data, kappa, sigmoid_neg](std::span<const double> x,
                                             std::span<const double> v) {
    std::vector<double> out = scaled(v, kappa);
    for (std::size_t i = 0; i < data->z.size(); ++i) {
      const double s = sigmoid_neg(dot(x, data->z[i]) * data->y[i]);
      axpy(s * (1.0 - s) * dot(v, data->z[i]), data->z[i], out);
    }
    return out;
  };
  return ConvexObjective(n, value, gradient, hess_vec);
}

// Convex view of an SPD quadratic 0.5 x'Ax - b'x.  Gradient evaluations are
// counted by the objective, not by the operator's matvec counter, so the two
// cost models never mix.
inline ConvexObjective quadratic_objective(const QuadraticProblem& problem) {
  auto shared = std::make_shared<QuadraticProblem>(problem);
  auto value = [shared](std::span<const double> x) { return shared->objective(x); };
  auto gradient = [shared](std::span<const double> x) {
    std::vector<double> g = shared->op.apply_unrecorded(x);
    axpy(-1.0, shared->rhs, g);
    return g;
  };
  auto hess_vec = [shared](std::span<const double>, std::span<const double> v) {
    return shared->op.apply_unrecorded(v);
  };
  return ConvexObjective(problem.op.dim(), value, gradient, hess_vec);
}

// Finite-difference step: h = 1e-5 / min{1, max{1e-3, 1e5 * ||direction||}},
// always inside [1e-5, 1e-2].  A larger h compensates for small directions so
// the probe step h*g never collapses to rounding noise.
inline double fd_step(double direction_norm) {
  return 1.0e-5 / std::min(1.0, std::max(1.0e-3, 1.0e5 * direction_norm));
}

// Finite-difference curvature in an arbitrary direction:
// (grad f(x + h v) - g)/h with g = grad f(x) already known.  Costs exactly
// one gradient evaluation.
inline std::vector<double> hessian_vec_fd_dir(const ConvexObjective& obj,
                                              std::span<const double> x,
                                              std::span<const double> g_at_x,
                                              std::span<const double> v,
                                              std::size_t iteration_for_errors = 0) {
  check_same_size(g_at_x, v, "hessian_vec_fd_dir");
  const double h = fd_step(norm(v));
  std::vector<double> shifted(x.begin(), x.end());
  axpy(h, v, shifted);
  std::vector<double> gs = obj.gradient(shifted);
  if (!all_finite(gs))
    throw NumericalFailure("hessian_vec_fd: non-finite gradient at probe point",
                           iteration_for_errors);
  axpy(-1.0, g_at_x, gs);
  scale(gs, 1.0 / h);
  return gs;
}

// Curvature along the gradient itself, the product every iteration needs.
inline std::vector<double> hessian_vec_fd(const ConvexObjective& obj, std::span<const double> x,
                                          std::span<const double> g,
                                          std::size_t iteration_for_errors = 0) {
  return hessian_vec_fd_dir(obj, x, g, g, iteration_for_errors);
}

// First trial steplength (g'Hg)/((Hg)'(Hg)) -- the minimal-residual formula
// evaluated on the local curvature.  Degenerate (nonpositive or vanishing)
// curvature falls back to 1 and raises the flag; strict convexity rules this
// out, so the flag only matters for defensive callers.
inline double trial_steplength(std::span<const double> g, std::span<const double> hg,
                               bool* degenerate = nullptr) {
  check_same_size(g, hg, "trial_steplength");
  if (!(dot(g, g) > 0.0)) throw std::invalid_argument("trial_steplength: zero gradient");
  if (degenerate) *degenerate = false;
  const double num = dot(g, hg);
  const double den = dot(hg, hg);
  if (!(num > 0.0) || !(den > 0.0)) {
    if (degenerate) *degenerate = true;
    return 1.0;
  }
  return num / den;
}

// Nonmonotone budget: eta0 at k = 0, then eta0 / k^exponent; summable for
// exponent > 1.
inline double eta_schedule(double eta0, std::size_t k, double exponent = 1.1) {
  if (!(eta0 > 0.0)) throw std::invalid_argument("eta_schedule: eta0 must be positive");
  if (k == 0) return eta0;
  return eta0 / std::pow(static_cast<double>(k), exponent);
}

struct LineSearchParams {
  double gamma = 1.0e-4;     // sufficient-decrease coefficient, in (0, 1)
  double sigma1 = 0.1;       // safeguarded-interpolation window [sigma1*b, sigma2*b]
  double sigma2 = 0.5;
  double eta0 = 0.0;         // nonmonotone budget at k = 0; 0 = auto (||g_0|| at run start)
  double eta_exponent = 1.1; // decay power, > 1 so the budget is summable

  void validate() const {
    if (!(gamma > 0.0 && gamma < 1.0))
      throw std::invalid_argument("LineSearchParams: gamma must lie in (0, 1)");
    if (!(sigma1 > 0.0 && sigma1 < sigma2 && sigma2 < 1.0))
      throw std::invalid_argument("LineSearchParams: need 0 < sigma1 < sigma2 < 1");
    if (!(eta0 >= 0.0))
      throw std::invalid_argument("LineSearchParams: eta0 must be nonnegative");
    if (!(eta_exponent > 1.0))
      throw std::invalid_argument("LineSearchParams: eta_exponent must exceed 1");
  }
};

struct LineSearchResult {
  double accepted_steplength = 0.0;  // beta * trial_step
  std::vector<double> x_next;
  double f_next = 0.0;
  unsigned backtracks = 0;
};

// Backtracking with safeguarded quadratic interpolation under the
// nonmonotone acceptance rule
//   f(x + beta*t*d) <= f(x) - gamma (beta*t)^2 ||g||^2 + eta.
// t is the already-formed trial steplength (relaxation times steplength for
// gradient directions, 1 for projection directions).  Each trial point costs
// one objective evaluation; the gradient is never re-evaluated.
inline LineSearchResult nonmonotone_line_search(const ConvexObjective& obj,
                                                std::span<const double> x, double f_at_x,
                                                std::span<const double> g,
                                                std::span<const double> d, double trial_step,
                                                double eta, const LineSearchParams& params,
                                                std::size_t iteration_for_errors = 0) {
  params.validate();
  if (!(trial_step > 0.0))
    throw std::invalid_argument("nonmonotone_line_search: trial step must be positive");
  if (!(eta > 0.0)) throw std::invalid_argument("nonmonotone_line_search: eta must be positive");
  check_same_size(x, d, "nonmonotone_line_search");

  const double gg = dot(g, g);
  const std::vector<double> dhat = scaled(d, trial_step);
  const double delta = dot(g, dhat);
  double beta = 1.0;
  std::vector<double> xplus(x.begin(), x.end());
  axpy(beta, dhat, xplus);
  double fplus = obj.value(xplus);
  unsigned backtracks = 0;
  // Negated acceptance test so non-finite trial values also backtrack.
  while (!(fplus <= f_at_x - params.gamma * (beta * trial_step) * (beta * trial_step) * gg +
                       eta)) {
    if (++backtracks > 60)
      throw LineSearchFailure("nonmonotone_line_search: more than 60 backtracks",
                              iteration_for_errors);
    const double beta_temp =
        -0.5 * beta * beta * delta / (fplus - f_at_x - beta * delta);
    // Safeguard: keep the interpolated minimizer only inside the window;
    // otherwise bisect.  NaN/inf interpolations fail the test and bisect too.
    beta = (beta_temp >= params.sigma1 * beta && beta_temp <= params.sigma2 * beta)
               ? beta_temp
               : 0.5 * beta;
    xplus.assign(x.begin(), x.end());
    axpy(beta, dhat, xplus);
    fplus = obj.value(xplus);
  }
  LineSearchResult result;
  result.accepted_steplength = beta * trial_step;
  result.x_next = std::move(xplus);
  result.f_next = fplus;
  result.backtracks = backtracks;
  return result;
}

enum class ConvexMethod { mr_relaxed, eig_accel, lba };

// Relaxed minimal-residual minimization with optional eigenvector-detection
// acceleration, every step validated by the nonmonotone line search.
//   * mr_relaxed: always the relaxed step, trial steplength sigma*alpha.
//   * eig_accel:  full step (trial alpha) when the detection quantity,
//                 computed from the curvature probe, falls below eps_eig.
//   * lba:        on detection, build a Lanczos space for the Hessian map
//                 frozen at x_k (one gradient evaluation per dimension),
//                 take the least-squares direction with trial steplength 1.
// Stops when ||g|| falls below the absolute tolerance config.grad_tol.
inline ConvergenceTrace convex_solver_run(const ConvexObjective& obj, ConvexMethod method,
                                          const SolverConfig& config,
                                          const LineSearchParams& ls_params,
                                          std::span<const double> x0) {
  config.validate();
  ls_params.validate();
  if (x0.size() != obj.dim())
    throw std::invalid_argument("convex_solver_run: x0 dimension mismatch");
  obj.reset_gradient_evals();

  std::vector<double> x(x0.begin(), x0.end());
  std::vector<double> g = obj.gradient(x);
  double f = obj.value(x);
  if (!std::isfinite(f)) throw NumericalFailure("convex_solver_run: non-finite f(x0)", 0);
  const double g0_norm = norm(g);
  const double eta0 = ls_params.eta0 > 0.0 ? ls_params.eta0 : std::max(g0_norm, 1.0e-300);

  // A fixed one-dimensional projection is exactly the full minimal-residual
  // step on the frozen curvature; take the cheaper equivalent branch.
  const bool one_dim_projection_as_step =
      method == ConvexMethod::lba && config.lanczos_m == 1 &&
      config.adaptive_policy.kind == AdaptivePolicy::Kind::none;

  ConvergenceTrace trace;
  RunSummary& summary = trace.summary;
  bool converged = false;
  double gn = g0_norm;
  for (std::size_t k = 0;; ++k) {
    gn = norm(g);
    if (!std::isfinite(gn) || !std::isfinite(f))
      throw NumericalFailure("convex_solver_run: non-finite iterate", k);
    if (gn <= config.grad_tol || gn < 1.0e-300) {
      converged = true;
      break;
    }
    if (k >= config.max_iter) break;

    const std::vector<double> hg = hessian_vec_fd(obj, x, g, k);
    bool degenerate = false;
    const double alpha = trial_steplength(g, hg, &degenerate);
    const double detection = eig_residual(g, hg, alpha);
    const double eta = eta_schedule(eta0, k, ls_params.eta_exponent);

    IterationRecord rec;
    rec.k = k;
    rec.residual_norm = gn;
    rec.steplength = alpha;
    rec.eig_residual = detection;
    rec.objective_value = f;
    rec.eta = eta;

    const bool trigger =
        method != ConvexMethod::mr_relaxed && !degenerate && detection < config.eps_eig;
    std::vector<double> d;
    double trial = 0.0;
    if (trigger && method == ConvexMethod::lba && !one_dim_projection_as_step) {
      // Freeze the local Hessian-vector map; each application is one
      // finite-difference probe, i.e. one gradient evaluation.
      const std::vector<double>& x_frozen = x;
      const std::vector<double>& g_frozen = g;
      const MatVec frozen = [&obj, &x_frozen, &g_frozen, k](std::span<const double> v) {
        return hessian_vec_fd_dir(obj, x_frozen, g_frozen, v, k);
      };
      auto [fact, sol] = adaptive_lanczos(frozen, obj.dim(), scaled(g, -1.0),
                                          config.adaptive_policy, config.lanczos_m);
      d = fact.expand(std::span<const double>(sol.y.data(), sol.steps_used));
      trial = 1.0;
      rec.event = StepEvent::lanczos_projection;
      rec.projection_size = sol.steps_used;
      ++summary.lanczos_calls;
    } else if (trigger) {
      d = scaled(g, -1.0);
      trial = alpha;
      rec.event = StepEvent::optimal_step;
      rec.relaxation_used = 1.0;
    } else {
      d = scaled(g, -1.0);
      trial = config.sigma * alpha;
      rec.event = StepEvent::plain;
      rec.relaxation_used = config.sigma;
    }

    const LineSearchResult ls =
        nonmonotone_line_search(obj, x, f, g, d, trial, eta, ls_params, k);
    x = ls.x_next;
    f = ls.f_next;
    rec.accepted_steplength = ls.accepted_steplength;
    rec.backtracks = ls.backtracks;
    summary.total_backtracks += ls.backtracks;

    g = obj.gradient(x);
    rec.cumulative_grad_evals = obj.gradient_evals();
    trace.records.push_back(rec);
  }

  summary.iterations = trace.records.size();
  summary.total_grad_evals = obj.gradient_evals();
  summary.converged = converged;
  summary.final_residual_norm = gn;
  return trace;
}

}  // namespace relgrad
