#pragma once

// Lanczos tridiagonalization and the small least-squares solves built on it.
//
// The factorization is kept in extended form: after j steps the basis holds
// v_1..v_{j+1} (v_{j+1} missing on happy breakdown) and the (j+1) x j
// tridiagonal T satisfies A V_j = V_{j+1} T.  That makes the projection update
// A V_j y = V_{j+1} (T y) available without any extra operator application,
// which the solver cost accounting depends on.
//
// The least-squares state mirrors the usual GMRES construction: a QR of the
// extended tridiagonal maintained by plane rotations, one new column per
// Lanczos step, with the current residual norm read off the transformed
// right-hand side.  R has bandwidth 3, so the solve is a short back
// substitution.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "relgrad/operator.hpp"
#include "relgrad/rng.hpp"
#include "relgrad/tridiagonal.hpp"
#include "relgrad/vector_ops.hpp"

namespace relgrad {

// Type-erased symmetric matrix-vector product.  The solvers build Krylov
// spaces both for explicit operators and for finite-difference Hessian maps,
// so the Lanczos core only assumes a callable.
using MatVec = std::function<std::vector<double>(std::span<const double>)>;

// Counted apply of an explicit operator, for use as a MatVec.  The operator
// must outlive the returned callable.
inline MatVec counted_apply(const SymmetricOperator& op) {
  return [&op](std::span<const double> v) { return op.apply(v); };
}

struct LanczosFactorization {
  std::vector<std::vector<double>> basis;  // v_1 .. v_{steps+1}; steps vectors on breakdown
  std::vector<double> alpha;               // diagonal of T, length steps
  std::vector<double> beta;                // sub/superdiagonal, length steps; beta[steps-1]
                                           // is the extension row entry of the extended T
  double start_norm = 0.0;
  std::size_t steps = 0;
  bool breakdown = false;

  // Extended tridiagonal times y: length steps+1 coefficient vector c with
  // A V y = sum_i c_i v_i (exactly in exact arithmetic).
  std::vector<double> tridiag_times(std::span<const double> y) const {
    if (y.size() != steps)
      throw std::invalid_argument("LanczosFactorization::tridiag_times: bad y length");
    std::vector<double> out(steps + 1, 0.0);
    for (std::size_t i = 0; i <= steps; ++i) {
      double s = 0.0;
      if (i >= 1) s += beta[i - 1] * y[i - 1];
      if (i < steps) s += alpha[i] * y[i];
      if (i + 1 < steps) s += beta[i] * y[i + 1];
      out[i] = s;
    }
    return out;
  }

  // Linear combination of the leading basis vectors.
  std::vector<double> expand(std::span<const double> coeffs) const {
    if (coeffs.size() > basis.size())
      throw std::invalid_argument("LanczosFactorization::expand: more coefficients than basis");
    std::vector<double> out(basis.empty() ? 0 : basis.front().size(), 0.0);
    for (std::size_t i = 0; i < coeffs.size(); ++i) axpy(coeffs[i], basis[i], out);
    return out;
  }

  // Ritz values: eigenvalues of the square j x j block of T, ascending.
  std::vector<double> square_block_eigenvalues() const {
    if (steps == 0)
      throw std::invalid_argument("LanczosFactorization: no steps, no Ritz values");
    return tridiagonal_eigenvalues(
        std::span<const double>(alpha.data(), steps),
        std::span<const double>(beta.data(), steps - 1));
  }
};

// Incremental Lanczos process: one operator application per advance().  Full
// (two-pass classical Gram-Schmidt) reorthogonalization is on by default;
// the solvers rely on it to keep long recurrences trustworthy.
class LanczosProcess {
 public:
  LanczosProcess(MatVec apply, std::size_t dim, std::span<const double> start,
                 bool reorthogonalize = true)
      : apply_(std::move(apply)), dim_(dim), reorthogonalize_(reorthogonalize) {
    if (start.size() != dim_) throw std::invalid_argument("LanczosProcess: start dimension mismatch");
    fact_.start_norm = norm(start);
    if (!(fact_.start_norm > 0.0))
      throw std::invalid_argument("LanczosProcess: start vector must be nonzero");
    fact_.basis.push_back(scaled(start, 1.0 / fact_.start_norm));
  }

  bool can_advance() const { return !fact_.breakdown && fact_.steps < dim_; }

  // One Lanczos step.  Returns true if the basis grew; false on happy
  // breakdown (the new off-diagonal entry is recorded, but no new vector).
  bool advance() {
    if (!can_advance()) throw std::logic_error("LanczosProcess::advance: process finished");
    const std::size_t j = fact_.steps;
    const std::vector<double>& v = fact_.basis[j];
    std::vector<double> w = apply_(v);
    if (w.size() != dim_) throw std::invalid_argument("LanczosProcess: operator changed dimension");
    const double a = dot(v, w);
    axpy(-a, v, w);
    if (j >= 1) axpy(-fact_.beta[j - 1], fact_.basis[j - 1], w);
    if (reorthogonalize_)
      for (int pass = 0; pass < 2; ++pass)
        for (const std::vector<double>& u : fact_.basis) axpy(-dot(u, w), u, w);
    fact_.alpha.push_back(a);
    norm_estimate_ = std::max(norm_estimate_, std::abs(a));
    const double b = norm(w);
    fact_.beta.push_back(b);
    fact_.steps = j + 1;
    if (b <= 1.0e-12 * norm_estimate_) {
      fact_.breakdown = true;
      return false;
    }
    norm_estimate_ = std::max(norm_estimate_, b);
    scale(w, 1.0 / b);
    fact_.basis.push_back(std::move(w));
    return true;
  }

  const LanczosFactorization& factorization() const { return fact_; }
  LanczosFactorization take() { return std::move(fact_); }

 private:
  MatVec apply_;
  std::size_t dim_;
  bool reorthogonalize_;
  double norm_estimate_ = 0.0;  // largest |T entry| so far, for the breakdown test
  LanczosFactorization fact_;
};

// Fixed-depth factorization: m steps (clamped to dim), fewer on breakdown.
// Consumes exactly `steps` operator applications.
inline LanczosFactorization lanczos_factorize(const MatVec& apply, std::size_t dim,
                                              std::span<const double> start, std::size_t m,
                                              bool reorthogonalize = true) {
  if (m == 0) throw std::invalid_argument("lanczos_factorize: m must be at least 1");
  const std::size_t m_eff = std::min(m, dim);
  LanczosProcess proc(apply, dim, start, reorthogonalize);
  while (proc.factorization().steps < m_eff && proc.can_advance()) proc.advance();
  return proc.take();
}

inline LanczosFactorization lanczos_factorize(const SymmetricOperator& op,
                                              std::span<const double> start, std::size_t m,
                                              bool reorthogonalize = true) {
  return lanczos_factorize(counted_apply(op), op.dim(), start, m, reorthogonalize);
}

// Incrementally maintained QR of the extended tridiagonal, for
// min_y || start_norm e_1 - T y ||.  One add_column per Lanczos step.
class TridiagLeastSquares {
 public:
  explicit TridiagLeastSquares(double start_norm)
      : rhs_{start_norm}, residual_(std::abs(start_norm)) {}

  // Append column j (0-based) of the extended tridiagonal: beta_prev is the
  // superdiagonal entry (ignored/zero for the first column), alpha the
  // diagonal entry, beta_next the subdiagonal entry below the diagonal.
  void add_column(double beta_prev, double alpha, double beta_next) {
    const std::size_t j = r0_.size();
    double top = 0.0;        // row j-2 after previous rotations
    double mid = beta_prev;  // row j-1
    double low = alpha;      // row j
    if (j >= 2) {
      top = sn_[j - 2] * mid;
      mid = cs_[j - 2] * mid;
    }
    if (j >= 1) {
      const double t = mid;
      mid = cs_[j - 1] * t + sn_[j - 1] * low;
      low = -sn_[j - 1] * t + cs_[j - 1] * low;
    }
    // New rotation annihilating the subdiagonal; a zero column keeps the
    // identity rotation.
    double c = 1.0;
    double s = 0.0;
    double rho = std::hypot(low, beta_next);
    if (rho > 0.0) {
      c = low / rho;
      s = beta_next / rho;
    }
    cs_.push_back(c);
    sn_.push_back(s);
    r2_.push_back(top);
    r1_.push_back(mid);
    r0_.push_back(rho);
    const double t = rhs_[j];
    rhs_[j] = c * t;
    rhs_.push_back(-s * t);
    residual_ = std::abs(rhs_[j + 1]);
  }

  // Least-squares residual norm after the columns added so far.
  double residual() const { return residual_; }

  std::size_t columns() const { return r0_.size(); }

  // Back-substitution on the bandwidth-3 R factor.
  std::vector<double> solve() const {
    const std::size_t j = r0_.size();
    std::vector<double> y(j, 0.0);
    for (std::size_t ii = j; ii-- > 0;) {
      double s = rhs_[ii];
      if (ii + 1 < j) s -= r1_[ii + 1] * y[ii + 1];
      if (ii + 2 < j) s -= r2_[ii + 2] * y[ii + 2];
      if (r0_[ii] == 0.0)
        throw std::runtime_error("TridiagLeastSquares::solve: singular system");
      y[ii] = s / r0_[ii];
    }
    return y;
  }

 private:
  std::vector<double> r0_, r1_, r2_;  // R diagonal, first and second superdiagonals
  std::vector<double> cs_, sn_;
  std::vector<double> rhs_;  // rotated right-hand side, length columns()+1
  double residual_;
};

// Depth policy for the Lanczos projection inside the accelerated solvers:
// either a fixed number of steps (none), a fixed relative residual target, or
// a target that tightens with the outer residual norm.
struct AdaptivePolicy {
  enum class Kind { none, fixed_reltol, residual_power };

  Kind kind = Kind::none;
  double value = 0.0;  // reltol for fixed_reltol, exponent for residual_power

  static AdaptivePolicy none() { return {}; }
  static AdaptivePolicy fixed_reltol(double reltol) {
    return {Kind::fixed_reltol, reltol};
  }
  static AdaptivePolicy residual_power(double exponent) {
    return {Kind::residual_power, exponent};
  }

  void validate() const {
    switch (kind) {
      case Kind::none:
        return;
      case Kind::fixed_reltol:
        if (!(value > 0.0 && value < 1.0))
          throw std::invalid_argument("AdaptivePolicy: fixed_reltol must be in (0,1)");
        return;
      case Kind::residual_power:
        if (!(value > 0.0))
          throw std::invalid_argument("AdaptivePolicy: residual_power exponent must be positive");
        return;
    }
    throw std::invalid_argument("AdaptivePolicy: unknown kind");
  }

  // Relative residual target for a projection started at residual norm rn;
  // zero disables early stopping (fixed-depth behaviour).
  double effective_reltol(double residual_norm) const {
    switch (kind) {
      case Kind::none:
        return 0.0;
      case Kind::fixed_reltol:
        return value;
      case Kind::residual_power:
        return std::min(std::pow(residual_norm, value), 0.99);
    }
    return 0.0;  // unreachable
  }
};

struct ProjectionSolution {
  std::vector<double> y;            // least-squares coefficients in the Lanczos basis
  double achieved_residual = 0.0;   // || r - A V y || predicted by the rotations
  std::size_t steps_used = 0;
};

// Step-by-step Lanczos with the least-squares residual monitored after every
// step; stops as soon as the policy's target is met, at m_max steps, or at
// breakdown.  Consumes exactly steps_used operator applications.
inline std::pair<LanczosFactorization, ProjectionSolution> adaptive_lanczos(
    const MatVec& apply, std::size_t dim, std::span<const double> r,
    const AdaptivePolicy& policy, std::size_t m_max, bool reorthogonalize = true) {
  policy.validate();
  if (m_max == 0) throw std::invalid_argument("adaptive_lanczos: m_max must be at least 1");
  const std::size_t m_eff = std::min(m_max, dim);
  LanczosProcess proc(apply, dim, r, reorthogonalize);
  const double rn = proc.factorization().start_norm;
  const double target = policy.effective_reltol(rn) * rn;
  TridiagLeastSquares lsq(rn);
  while (true) {
    proc.advance();
    const LanczosFactorization& f = proc.factorization();
    const std::size_t j = f.steps;
    lsq.add_column(j >= 2 ? f.beta[j - 2] : 0.0, f.alpha[j - 1], f.beta[j - 1]);
    if (lsq.residual() <= target || j >= m_eff || f.breakdown) break;
  }
  ProjectionSolution sol;
  sol.y = lsq.solve();
  sol.achieved_residual = lsq.residual();
  sol.steps_used = proc.factorization().steps;
  return {proc.take(), sol};
}

inline std::pair<LanczosFactorization, ProjectionSolution> adaptive_lanczos(
    const SymmetricOperator& op, std::span<const double> r, const AdaptivePolicy& policy,
    std::size_t m_max, bool reorthogonalize = true) {
  return adaptive_lanczos(counted_apply(op), op.dim(), r, policy, m_max, reorthogonalize);
}

// Cheap estimates of the extreme eigenvalues: extreme Ritz values of an
// m-step Lanczos factorization from a seeded random start.  Ritz values are
// Rayleigh quotients over the Krylov space, so both lie inside the spectrum.
// On breakdown before two steps the single Ritz value serves as both ends.
inline std::pair<double, double> extreme_eigen_estimates(const SymmetricOperator& op,
                                                         std::size_t m, std::uint64_t seed) {
  if (m < 2) throw std::invalid_argument("extreme_eigen_estimates: need at least 2 steps");
  Pcg64 rng(seed);
  const std::vector<double> start = random_vector(rng, op.dim());
  const LanczosFactorization fact = lanczos_factorize(op, start, m);
  const std::vector<double> ritz = fact.square_block_eigenvalues();
  return {ritz.front(), ritz.back()};
}

}  // namespace relgrad
