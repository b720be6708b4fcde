#pragma once

// Independent dense linear-algebra oracles used only by the tests: a cyclic
// Jacobi eigensolver, Cholesky factorization/solves, dense least squares, a
// central-difference gradient checker, and seeded random SPD matrices.  These
// deliberately share no code with the library so they can serve as neutral
// referees.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "relgrad/rng.hpp"

namespace testsupport {

using Matrix = std::vector<std::vector<double>>;  // row-major dense

inline Matrix zeros(std::size_t rows, std::size_t cols) {
  return Matrix(rows, std::vector<double>(cols, 0.0));
}

inline Matrix identity_matrix(std::size_t n) {
  Matrix m = zeros(n, n);
  for (std::size_t i = 0; i < n; ++i) m[i][i] = 1.0;
  return m;
}

inline std::vector<double> mat_vec(const Matrix& a, std::span<const double> x) {
  if (a.empty() || a.front().size() != x.size())
    throw std::invalid_argument("mat_vec: shape mismatch");
  std::vector<double> out(a.size(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j) out[i] += a[i][j] * x[j];
  return out;
}

inline Matrix transpose(const Matrix& a) {
  if (a.empty()) return {};
  Matrix out = zeros(a.front().size(), a.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.front().size(); ++j) out[j][i] = a[i][j];
  return out;
}

inline Matrix mat_mat(const Matrix& a, const Matrix& b) {
  if (a.empty() || b.empty() || a.front().size() != b.size())
    throw std::invalid_argument("mat_mat: shape mismatch");
  Matrix out = zeros(a.size(), b.front().size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k) {
      const double aik = a[i][k];
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < b.front().size(); ++j) out[i][j] += aik * b[k][j];
    }
  return out;
}

// Flattened row-major entries, as the library's dense factory expects.
inline std::vector<double> flatten(const Matrix& a) {
  std::vector<double> out;
  out.reserve(a.size() * (a.empty() ? 0 : a.front().size()));
  for (const auto& row : a) out.insert(out.end(), row.begin(), row.end());
  return out;
}

// ---------------------------------------------------------------------------
// Random SPD matrices with a prescribed spectrum
// ---------------------------------------------------------------------------

struct SpdMatrix {
  Matrix a;                        // exactly symmetric dense entries
  std::vector<double> spectrum;    // intended eigenvalues, ascending (accurate
                                   // to rounding in the similarity transform)
};

// Orthonormal columns via modified Gram-Schmidt on a random normal matrix.
inline Matrix random_orthogonal(relgrad::Pcg64& rng, std::size_t n) {
  Matrix q = zeros(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.normal();
    for (std::size_t prev = 0; prev < j; ++prev) {
      double proj = 0.0;
      for (std::size_t i = 0; i < n; ++i) proj += q[i][prev] * v[i];
      for (std::size_t i = 0; i < n; ++i) v[i] -= proj * q[i][prev];
    }
    double nrm = 0.0;
    for (double x : v) nrm += x * x;
    nrm = std::sqrt(nrm);
    if (!(nrm > 1.0e-8)) {  // essentially impossible; redraw defensively
      --j;
      continue;
    }
    for (std::size_t i = 0; i < n; ++i) q[i][j] = v[i] / nrm;
  }
  return q;
}

// Q diag(spectrum) Q^T with endpoints pinned to [lambda_lo, lambda_hi] and
// interior values drawn uniformly; the result is symmetrized exactly.
inline SpdMatrix random_spd(relgrad::Pcg64& rng, std::size_t n, double lambda_lo,
                            double lambda_hi) {
  if (n == 0 || !(lambda_lo > 0.0) || !(lambda_hi >= lambda_lo))
    throw std::invalid_argument("random_spd: bad parameters");
  SpdMatrix out;
  out.spectrum.resize(n);
  out.spectrum.front() = lambda_lo;
  if (n > 1) out.spectrum.back() = lambda_hi;
  for (std::size_t i = 1; i + 1 < n; ++i)
    out.spectrum[i] = rng.uniform(lambda_lo, lambda_hi);
  std::sort(out.spectrum.begin(), out.spectrum.end());

  const Matrix q = random_orthogonal(rng, n);
  out.a = zeros(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += q[i][k] * out.spectrum[k] * q[j][k];
      out.a[i][j] = s;
      out.a[j][i] = s;
    }
  return out;
}

// ---------------------------------------------------------------------------
// Cyclic Jacobi eigensolver
// ---------------------------------------------------------------------------

struct EigenDecomposition {
  std::vector<double> values;  // ascending
  Matrix vectors;              // eigenvectors as columns, matching values
};

inline EigenDecomposition jacobi_eigen(Matrix a, int max_sweeps = 100) {
  const std::size_t n = a.size();
  for (const auto& row : a)
    if (row.size() != n) throw std::invalid_argument("jacobi_eigen: not square");
  Matrix v = identity_matrix(n);
  double scale = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) scale = std::max(scale, std::abs(a[i][j]));
  if (scale == 0.0) scale = 1.0;

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a[i][j] * a[i][j];
    if (std::sqrt(off) <= 1.0e-15 * scale * static_cast<double>(n)) break;

    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) <= 1.0e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p];
          const double akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k];
          const double aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v[k][p];
          const double vkq = v[k][q];
          v[k][p] = c * vkp - s * vkq;
          v[k][q] = s * vkp + c * vkq;
        }
      }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t x, std::size_t y) { return a[x][x] < a[y][y]; });
  EigenDecomposition out;
  out.values.resize(n);
  out.vectors = zeros(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    out.values[j] = a[order[j]][order[j]];
    for (std::size_t i = 0; i < n; ++i) out.vectors[i][j] = v[i][order[j]];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cholesky and dense least squares
// ---------------------------------------------------------------------------

// Lower-triangular factor L with A = L L^T; throws if A is not SPD.
inline Matrix cholesky(const Matrix& a) {
  const std::size_t n = a.size();
  Matrix l = zeros(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) {
      double s = a[i][j];
      for (std::size_t k = 0; k < j; ++k) s -= l[i][k] * l[j][k];
      if (i == j) {
        if (!(s > 0.0)) throw std::invalid_argument("cholesky: matrix is not SPD");
        l[i][i] = std::sqrt(s);
      } else {
        l[i][j] = s / l[j][j];
      }
    }
  }
  return l;
}

inline std::vector<double> forward_substitute(const Matrix& l, std::span<const double> b) {
  std::vector<double> y(b.size());
  for (std::size_t i = 0; i < b.size(); ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l[i][k] * y[k];
    y[i] = s / l[i][i];
  }
  return y;
}

inline std::vector<double> back_substitute_transposed(const Matrix& l,
                                                      std::span<const double> y) {
  std::vector<double> x(y.size());
  for (std::size_t ii = y.size(); ii-- > 0;) {
    double s = y[ii];
    for (std::size_t k = ii + 1; k < y.size(); ++k) s -= l[k][ii] * x[k];
    x[ii] = s / l[ii][ii];
  }
  return x;
}

inline std::vector<double> cholesky_solve(const Matrix& l, std::span<const double> b) {
  return back_substitute_transposed(l, forward_substitute(l, b));
}

// u' A^{-1} v through a precomputed Cholesky factor of A.
class InverseInnerProduct {
 public:
  explicit InverseInnerProduct(const Matrix& a) : l_(cholesky(a)) {}

  double dot(std::span<const double> u, std::span<const double> v) const {
    const std::vector<double> lu = forward_substitute(l_, u);
    const std::vector<double> lv = forward_substitute(l_, v);
    double s = 0.0;
    for (std::size_t i = 0; i < lu.size(); ++i) s += lu[i] * lv[i];
    return s;
  }

  double norm(std::span<const double> u) const { return std::sqrt(dot(u, u)); }

 private:
  Matrix l_;
};

struct LeastSquaresSolution {
  std::vector<double> y;
  double residual = 0.0;
};

// min_y || b - A y || for a tall dense A, via normal equations (the test
// systems are tiny and well conditioned).
inline LeastSquaresSolution dense_lstsq(const Matrix& a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("dense_lstsq: shape mismatch");
  const std::size_t cols = a.empty() ? 0 : a.front().size();
  Matrix gram = zeros(cols, cols);
  std::vector<double> rhs(cols, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      rhs[j] += a[i][j] * b[i];
      for (std::size_t k = j; k < cols; ++k) gram[j][k] += a[i][j] * a[i][k];
    }
  for (std::size_t j = 0; j < cols; ++j)
    for (std::size_t k = 0; k < j; ++k) gram[j][k] = gram[k][j];

  LeastSquaresSolution out;
  out.y = cholesky_solve(cholesky(gram), rhs);
  double rr = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    double resid = b[i];
    for (std::size_t j = 0; j < cols; ++j) resid -= a[i][j] * out.y[j];
    rr += resid * resid;
  }
  out.residual = std::sqrt(rr);
  return out;
}

// ---------------------------------------------------------------------------
// Derivative checking
// ---------------------------------------------------------------------------

inline std::vector<double> central_diff_gradient(
    const std::function<double(std::span<const double>)>& f, std::span<const double> x,
    double h = 1.0e-6) {
  std::vector<double> g(x.size());
  std::vector<double> probe(x.begin(), x.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + h;
    const double fp = f(probe);
    probe[i] = saved - h;
    const double fm = f(probe);
    probe[i] = saved;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace testsupport
