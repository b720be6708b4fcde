#pragma once

// Eigenvalues of a symmetric tridiagonal matrix by bisection on the Sturm
// count.  This is all the spectral machinery the Lanczos-based estimates need
// (the extreme Ritz values), kept dependency-free and robust: the count
// recurrence is monotone, so bisection cannot misconverge.

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace relgrad {

// Number of eigenvalues of T strictly less than x, via the classic LDL'
// pivot recurrence with underflow safeguarding.
inline std::size_t sturm_count(std::span<const double> diag, std::span<const double> offdiag,
                               double x) {
  const std::size_t n = diag.size();
  std::size_t count = 0;
  double d = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double off = i == 0 ? 0.0 : offdiag[i - 1];
    d = diag[i] - x - off * off / d;
    if (d == 0.0) d = std::numeric_limits<double>::min();
    if (d < 0.0) ++count;
  }
  return count;
}

// All eigenvalues, ascending.  `offdiag` holds the n-1 sub/super-diagonal
// entries of the n x n matrix.
inline std::vector<double> tridiagonal_eigenvalues(std::span<const double> diag,
                                                   std::span<const double> offdiag) {
  const std::size_t n = diag.size();
  if (n == 0) throw std::invalid_argument("tridiagonal_eigenvalues: empty matrix");
  if (offdiag.size() + 1 != n)
    throw std::invalid_argument("tridiagonal_eigenvalues: offdiag must have n-1 entries");
  // Gershgorin enclosure of the whole spectrum.
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t i = 0; i < n; ++i) {
    const double radius = (i > 0 ? std::abs(offdiag[i - 1]) : 0.0) +
                          (i + 1 < n ? std::abs(offdiag[i]) : 0.0);
    lo = std::min(lo, diag[i] - radius);
    hi = std::max(hi, diag[i] + radius);
  }
  const double spread = std::max(hi - lo, 1.0e-300);
  const double tol = 1.0e-15 * std::max({std::abs(lo), std::abs(hi), 1.0});
  std::vector<double> eig(n);
  for (std::size_t k = 0; k < n; ++k) {
    // Bisect for the k-th smallest eigenvalue: the unique point where the
    // Sturm count crosses from <= k to > k.
    double a = lo - 1.0e-3 * spread;
    double b = hi + 1.0e-3 * spread;
    for (int iter = 0; iter < 120 && (b - a) > tol; ++iter) {
      const double mid = 0.5 * (a + b);
      if (sturm_count(diag, offdiag, mid) > k)
        b = mid;
      else
        a = mid;
    }
    eig[k] = 0.5 * (a + b);
  }
  return eig;
}

}  // namespace relgrad
