#pragma once

// Spectral laboratory for relaxed gradient iterations.  The residual recurrence
// of a relaxed step is, in the eigenbasis of the operator, a shifted and scaled
// power iteration r' = (1/s)(xi I - A) r; this header provides that iteration
// with pluggable shift policies, the closed-form expectation of the per-step
// log-gain of one eigencomponent against a reference component, and the exact
// two-mode (span{u_1, u_n}) Rayleigh-quotient recurrence together with its
// change-of-sides predicate and scale bounds.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "relgrad/errors.hpp"
#include "relgrad/operator.hpp"
#include "relgrad/rng.hpp"
#include "relgrad/vector_ops.hpp"

namespace relgrad {

// Raised when (xi I - A) r vanishes identically, i.e. xi is an eigenvalue and
// r the matching eigenvector, so no renormalized next iterate exists.
class ExactAnnihilation : public NumericalFailure {
 public:
  explicit ExactAnnihilation(const std::string& what, std::size_t iteration = 0)
      : NumericalFailure(what, iteration) {}
};

// Which normalization the iteration maintains: euclidean keeps sum beta_i^2 = 1
// (the steepest-descent picture), a_norm keeps sum lambda_i beta_i^2 = 1 (the
// minimal-residual picture).
enum class SpectralNorm { euclidean, a_norm };

inline std::string to_string(SpectralNorm n) {
  return n == SpectralNorm::euclidean ? "euclidean" : "a_norm";
}

// How the shift xi_k is chosen at each step.
//  random_uniform(sigma): xi drawn uniformly from the open interval
//    (lambda_1/sigma, lambda_n/sigma).
//  sd_derived(sigma):     xi = (r'Ar / r'r) / sigma, the shift a relaxed
//    steepest-descent step would use.
//  mr_derived(sigma):     xi = (r'A^2 r / r'Ar) / sigma, the minimal-residual
//    analogue.
//  fixed_sequence(list):  xi cycles through the given list.
class ShiftPolicy {
 public:
  enum class Kind { random_uniform, sd_derived, mr_derived, fixed_sequence };

  static ShiftPolicy random_uniform(double sigma) {
    return ShiftPolicy(Kind::random_uniform, sigma, {});
  }
  static ShiftPolicy sd_derived(double sigma) {
    return ShiftPolicy(Kind::sd_derived, sigma, {});
  }
  static ShiftPolicy mr_derived(double sigma) {
    return ShiftPolicy(Kind::mr_derived, sigma, {});
  }
  static ShiftPolicy fixed_sequence(std::vector<double> shifts) {
    if (shifts.empty())
      throw std::invalid_argument("ShiftPolicy: fixed sequence must be nonempty");
    return ShiftPolicy(Kind::fixed_sequence, 1.0, std::move(shifts));
  }

  Kind kind() const { return kind_; }
  double sigma() const { return sigma_; }
  const std::vector<double>& sequence() const { return sequence_; }

 private:
  ShiftPolicy(Kind kind, double sigma, std::vector<double> sequence)
      : kind_(kind), sigma_(sigma), sequence_(std::move(sequence)) {
    if (kind_ != Kind::fixed_sequence && !(sigma_ > 0.0 && sigma_ < 2.0))
      throw std::invalid_argument("ShiftPolicy: sigma must lie in (0, 2)");
  }

  Kind kind_;
  double sigma_;
  std::vector<double> sequence_;
};

// Record of a shifted-power run: the shift and scale used at each step, the
// Rayleigh sequence, and |beta_i| for a caller-chosen set of 1-based
// eigencomponent indices.  Entry 0 of the per-state arrays describes the
// normalized starting vector, so there are steps+1 recorded states.
struct SpectralTrace {
  SpectralNorm normalization = SpectralNorm::euclidean;
  std::vector<int> tracked_indices;
  // magnitudes[k][t] = |beta_{tracked_indices[t]}| at state k.
  std::vector<std::vector<double>> magnitudes;
  // rayleigh[k] = r'Ar/r'r (euclidean) or r'A^2r/r'Ar (a_norm) at state k.
  std::vector<double> rayleigh;
  std::vector<double> shifts;  // xi_k, one per step
  std::vector<double> scales;  // s_k,  one per step
};

// One step r' = (xi I - A) r, renormalized for the requested mode.  Returns the
// next vector together with the normalization factor s = |(xi I - A) r| (in the
// euclidean or A norm respectively).
struct ShiftedPowerStep {
  std::vector<double> vector;
  double scale = 0.0;
};

inline ShiftedPowerStep shifted_power_step(std::span<const double> r,
                                           const SymmetricOperator& op,
                                           double xi, SpectralNorm normalization) {
  if (r.size() != op.dim())
    throw std::invalid_argument("shifted_power_step: dimension mismatch");
  if (norm(r) == 0.0)
    throw std::invalid_argument("shifted_power_step: zero input vector");
  const std::vector<double> ar = op.apply_unrecorded(r);
  std::vector<double> w(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) w[i] = xi * r[i] - ar[i];
  double scale = 0.0;
  if (normalization == SpectralNorm::euclidean) {
    scale = norm(w);
  } else {
    const std::vector<double> aw = op.apply_unrecorded(w);
    scale = std::sqrt(std::max(0.0, dot(w, aw)));
  }
  if (scale == 0.0)
    throw ExactAnnihilation("shifted_power_step: shift annihilated the vector");
  ShiftedPowerStep out;
  out.vector = std::move(w);
  relgrad::scale(out.vector, 1.0 / scale);
  out.scale = scale;
  return out;
}

namespace detail {

// Rayleigh quotient matching the normalization mode; both forms are
// scale-invariant so they can be evaluated on the un-normalized vector too.
inline double spectral_rayleigh(const SymmetricOperator& op,
                                std::span<const double> r, SpectralNorm mode) {
  const std::vector<double> ar = op.apply_unrecorded(r);
  if (mode == SpectralNorm::euclidean) return dot(r, ar) / dot(r, r);
  return dot(ar, ar) / dot(r, ar);
}

}  // namespace detail

// Runs `steps` shifted-power steps from a seeded random start, drawing xi_k per
// the policy, and records |beta_i| = |u_i . r| for the requested (1-based)
// component indices.  `eigenpairs` must be the complete ascending spectrum of
// the operator with orthonormal eigenvectors.  If a shift exactly matches an
// eigenvalue the corresponding component is zeroed and the run simply
// continues, unless the whole vector is annihilated.
inline SpectralTrace run_shifted_power(const SymmetricOperator& op,
                                       const std::vector<EigenPair>& eigenpairs,
                                       const ShiftPolicy& policy, std::size_t steps,
                                       std::uint64_t seed,
                                       const std::vector<int>& tracked,
                                       SpectralNorm normalization =
                                           SpectralNorm::euclidean) {
  const std::size_t n = op.dim();
  if (eigenpairs.size() != n)
    throw std::invalid_argument(
        "run_shifted_power: eigenpairs must cover the full spectrum");
  for (int idx : tracked)
    if (idx < 1 || static_cast<std::size_t>(idx) > n)
      throw std::invalid_argument("run_shifted_power: tracked index out of range");
  const double lambda1 = eigenpairs.front().value;
  const double lambdan = eigenpairs.back().value;

  Pcg64 rng(seed);
  std::vector<double> r(n);
  for (double& x : r) x = rng.normal();

  SpectralTrace trace;
  trace.normalization = normalization;
  trace.tracked_indices = tracked;

  const auto record_state = [&](std::span<const double> v) {
    std::vector<double> mags(tracked.size());
    for (std::size_t t = 0; t < tracked.size(); ++t)
      mags[t] = std::abs(dot(eigenpairs[static_cast<std::size_t>(tracked[t] - 1)].vector, v));
    trace.magnitudes.push_back(std::move(mags));
    trace.rayleigh.push_back(detail::spectral_rayleigh(op, v, normalization));
  };

  // Normalize the start the same way every subsequent iterate is normalized.
  if (normalization == SpectralNorm::euclidean) {
    relgrad::scale(r, 1.0 / norm(r));
  } else {
    const std::vector<double> ar = op.apply_unrecorded(r);
    relgrad::scale(r, 1.0 / std::sqrt(dot(r, ar)));
  }
  record_state(r);

  for (std::size_t k = 0; k < steps; ++k) {
    double xi = 0.0;
    switch (policy.kind()) {
      case ShiftPolicy::Kind::random_uniform:
        xi = rng.uniform_open(lambda1 / policy.sigma(), lambdan / policy.sigma());
        break;
      case ShiftPolicy::Kind::sd_derived:
      case ShiftPolicy::Kind::mr_derived: {
        const SpectralNorm quotient_mode =
            policy.kind() == ShiftPolicy::Kind::sd_derived ? SpectralNorm::euclidean
                                                           : SpectralNorm::a_norm;
        xi = detail::spectral_rayleigh(op, r, quotient_mode) / policy.sigma();
        break;
      }
      case ShiftPolicy::Kind::fixed_sequence:
        xi = policy.sequence()[k % policy.sequence().size()];
        break;
    }
    ShiftedPowerStep step = shifted_power_step(r, op, xi, normalization);
    r = std::move(step.vector);
    trace.shifts.push_back(xi);
    trace.scales.push_back(step.scale);
    record_state(r);
  }
  return trace;
}

// Which component the log-gain of beta_i is measured against.
enum class LogRatioReference { lowest, highest };

namespace detail {

// Antiderivative-based value of the definite integral of log|t - c| over
// [a, b], with the 0 * log 0 = 0 convention at the endpoints.  Valid whether c
// lies inside or outside [a, b] (the improper integral across the kink
// converges to the same expression).
inline double integral_log_abs(double a, double b, double c) {
  const auto term = [](double x) { return x == 0.0 ? 0.0 : x * std::log(std::abs(x)); };
  return term(b - c) - term(a - c) - (b - a);
}

}  // namespace detail

// E[ log |xi - lambda_i| - log |xi - lambda_ref| ] for xi uniform on
// (lambda_1/sigma, lambda_n/sigma), where lambda_ref is lambda_1 (lowest) or
// lambda_n (highest).  Negative values mean the i-th component decays, per
// step and in expectation, relative to the reference extremal component.
inline double log_ratio_expectation(double lambda1, double lambdan, double lambda_i,
                                    double sigma, LogRatioReference reference) {
  if (!(lambda1 < lambdan))
    throw std::invalid_argument("log_ratio_expectation: requires lambda1 < lambdan");
  if (!(sigma > 0.0 && sigma < 2.0))
    throw std::invalid_argument("log_ratio_expectation: sigma must lie in (0, 2)");
  if (!(lambda_i >= lambda1 && lambda_i <= lambdan))
    throw std::invalid_argument(
        "log_ratio_expectation: lambda_i must lie in [lambda1, lambdan]");
  const double lo = lambda1 / sigma;
  const double hi = lambdan / sigma;
  const double ref = reference == LogRatioReference::lowest ? lambda1 : lambdan;
  return (detail::integral_log_abs(lo, hi, lambda_i) -
          detail::integral_log_abs(lo, hi, ref)) /
         (hi - lo);
}

// State of the exact two-mode recurrence: a unit vector supported on the two
// extreme eigencomponents, evolving under the sd-derived shifted power step.
struct TwoModeState {
  double beta1 = 1.0;   // signed component on u_1
  double betan = 0.0;   // signed component on u_n
  double lambda1 = 0.0;
  double lambdan = 1.0;
  double sigma = 1.0;

  double gamma() const { return 0.5 * (lambda1 + lambdan); }
  double half_width() const { return 0.5 * (lambdan - lambda1); }
  double rayleigh() const { return beta1 * beta1 * lambda1 + betan * betan * lambdan; }
  // Signed distance of the shifted Rayleigh quotient from the spectrum center.
  double offset() const { return rayleigh() / sigma - gamma(); }

  void validate() const {
    if (!(lambda1 < lambdan))
      throw std::invalid_argument("TwoModeState: requires lambda1 < lambdan");
    if (!(sigma > 0.0 && sigma < 2.0))
      throw std::invalid_argument("TwoModeState: sigma must lie in (0, 2)");
    if (std::abs(beta1 * beta1 + betan * betan - 1.0) > 1e-9)
      throw std::invalid_argument("TwoModeState: components must be unit-normalized");
  }

  // State with the given Rayleigh quotient and nonnegative components.
  static TwoModeState from_rayleigh(double lambda_bar, double lambda1,
                                    double lambdan, double sigma) {
    if (!(lambda1 < lambdan))
      throw std::invalid_argument("TwoModeState: requires lambda1 < lambdan");
    if (!(lambda_bar >= lambda1 && lambda_bar <= lambdan))
      throw std::invalid_argument(
          "TwoModeState: rayleigh quotient must lie in [lambda1, lambdan]");
    TwoModeState s;
    s.lambda1 = lambda1;
    s.lambdan = lambdan;
    s.sigma = sigma;
    s.beta1 = std::sqrt((lambdan - lambda_bar) / (lambdan - lambda1));
    s.betan = std::sqrt((lambda_bar - lambda1) / (lambdan - lambda1));
    s.validate();
    return s;
  }
};

// Normalization factor of the next two-mode step:
// s^2 = (a+h)^2 beta1^2 + (a-h)^2 betan^2.
inline double two_mode_scale(const TwoModeState& state) {
  const double a = state.offset();
  const double h = state.half_width();
  return std::sqrt((a + h) * (a + h) * state.beta1 * state.beta1 +
                   (a - h) * (a - h) * state.betan * state.betan);
}

// One exact step of the two-mode recurrence:
//   beta1' = (a + h) beta1 / s,   betan' = (a - h) betan / s.
// A state with beta1 = 0 or betan = 0 is single-mode and is a fixed point.
inline TwoModeState two_mode_step(const TwoModeState& state) {
  state.validate();
  if (state.beta1 == 0.0 || state.betan == 0.0) return state;
  const double a = state.offset();
  const double h = state.half_width();
  const double s = two_mode_scale(state);
  TwoModeState next = state;
  next.beta1 = (a + h) * state.beta1 / s;
  next.betan = (a - h) * state.betan / s;
  return next;
}

// Next Rayleigh quotient of the two-mode recurrence as a scalar map:
//   lambda' = lambda - 2 (lambda/sigma - gamma)(lambdan - lambda)(lambda - lambda1) / s^2,
// with s^2 assembled from the implied beta components.  Endpoints are fixed
// points.  The update decreases lambda iff lambda > sigma*gamma and increases
// it iff lambda < sigma*gamma.
inline double rayleigh_update(double lambda_bar, double lambda1, double lambdan,
                              double sigma) {
  if (!(lambda1 < lambdan))
    throw std::invalid_argument("rayleigh_update: requires lambda1 < lambdan");
  if (!(sigma > 0.0 && sigma < 2.0))
    throw std::invalid_argument("rayleigh_update: sigma must lie in (0, 2)");
  if (!(lambda_bar >= lambda1 && lambda_bar <= lambdan))
    throw std::invalid_argument(
        "rayleigh_update: lambda_bar must lie in [lambda1, lambdan]");
  if (lambda_bar == lambda1 || lambda_bar == lambdan) return lambda_bar;
  const double gamma = 0.5 * (lambda1 + lambdan);
  const double h = 0.5 * (lambdan - lambda1);
  const double a = lambda_bar / sigma - gamma;
  const double beta1_sq = (lambdan - lambda_bar) / (lambdan - lambda1);
  const double betan_sq = (lambda_bar - lambda1) / (lambdan - lambda1);
  const double s_sq = (a + h) * (a + h) * beta1_sq + (a - h) * (a - h) * betan_sq;
  return lambda_bar -
         2.0 * a * (lambdan - lambda_bar) * (lambda_bar - lambda1) / s_sq;
}

// True iff the next Rayleigh quotient lands on the other side of the biased
// median sigma*gamma, i.e.
//   (lambda/sigma - lambda1)^2 / (lambda - lambda1)
//     + (lambdan - lambda/sigma)^2 / (lambdan - lambda) < 2 (lambdan - lambda1) / sigma.
// Always true for sigma = 1 (the quotient then equi-oscillates around gamma).
inline bool change_sides_predicate(double lambda_bar, double lambda1, double lambdan,
                                   double sigma) {
  if (!(lambda1 < lambdan))
    throw std::invalid_argument("change_sides_predicate: requires lambda1 < lambdan");
  if (!(sigma > 0.0 && sigma < 2.0))
    throw std::invalid_argument("change_sides_predicate: sigma must lie in (0, 2)");
  if (!(lambda_bar > lambda1 && lambda_bar < lambdan))
    throw std::invalid_argument(
        "change_sides_predicate: lambda_bar must lie strictly inside "
        "(lambda1, lambdan)");
  const double shifted = lambda_bar / sigma;
  const double lhs = (shifted - lambda1) * (shifted - lambda1) / (lambda_bar - lambda1) +
                     (lambdan - shifted) * (lambdan - shifted) / (lambdan - lambda_bar);
  return lhs < 2.0 * (lambdan - lambda1) / sigma;
}

// Lower and upper bounds on the two-mode normalization factor:
//   h <= s <= h + max{ |lambdan/sigma - gamma|, |gamma - lambda1/sigma| }.
// The bounds do not depend on lambda_bar; it is accepted for signature parity
// with the other scalar maps.
inline std::pair<double, double> s_bounds(double lambda_bar, double lambda1,
                                          double lambdan, double sigma) {
  (void)lambda_bar;
  if (!(lambda1 < lambdan))
    throw std::invalid_argument("s_bounds: requires lambda1 < lambdan");
  if (!(sigma > 0.0 && sigma < 2.0))
    throw std::invalid_argument("s_bounds: sigma must lie in (0, 2)");
  const double gamma = 0.5 * (lambda1 + lambdan);
  const double h = 0.5 * (lambdan - lambda1);
  const double upper =
      h + std::max(std::abs(lambdan / sigma - gamma), std::abs(gamma - lambda1 / sigma));
  return {h, upper};
}

}  // namespace relgrad
