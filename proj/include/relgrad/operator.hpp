#pragma once

// Matrix-free symmetric positive definite operators.  A SymmetricOperator
// owns one of three storage forms (dense row-major, CSR sparse, diagonal) and
// exposes a single counted apply().  The matvec counter is the solver cost
// metric, so its semantics are strict: apply() increments it by exactly one,
// apply_unrecorded() never touches it, and solver entry points reset it so a
// finished run's counter equals the total reported in its summary.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "relgrad/vector_ops.hpp"

namespace relgrad {

class SymmetricOperator {
 public:
  // Dense symmetric matrix, row-major, n*n entries.
  static SymmetricOperator dense(std::size_t n, std::vector<double> entries) {
    if (entries.size() != n * n)
      throw std::invalid_argument("SymmetricOperator::dense: need n*n entries");
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (entries[i * n + j] != entries[j * n + i])
          throw std::invalid_argument("SymmetricOperator::dense: matrix not symmetric");
    SymmetricOperator op;
    op.dim_ = n;
    op.kind_ = Kind::kDense;
    op.dense_ = std::move(entries);
    return op;
  }

  // CSR sparse symmetric matrix.  Column indices must be sorted within each
  // row; symmetry is the caller's responsibility for off-pattern reasons, but
  // stored transposed pairs are verified.
  static SymmetricOperator sparse(std::size_t n, std::vector<std::size_t> row_ptr,
                                  std::vector<std::size_t> cols, std::vector<double> vals) {
    if (row_ptr.size() != n + 1 || cols.size() != vals.size() || row_ptr.back() != cols.size())
      throw std::invalid_argument("SymmetricOperator::sparse: inconsistent CSR arrays");
    SymmetricOperator op;
    op.dim_ = n;
    op.kind_ = Kind::kSparse;
    op.row_ptr_ = std::move(row_ptr);
    op.cols_ = std::move(cols);
    op.vals_ = std::move(vals);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = op.row_ptr_[i]; k < op.row_ptr_[i + 1]; ++k) {
        if (op.cols_[k] >= n)
          throw std::invalid_argument("SymmetricOperator::sparse: column index out of range");
        if (k + 1 < op.row_ptr_[i + 1] && op.cols_[k + 1] <= op.cols_[k])
          throw std::invalid_argument("SymmetricOperator::sparse: columns not strictly sorted");
        if (op.coefficient(op.cols_[k], i) != op.vals_[k])
          throw std::invalid_argument("SymmetricOperator::sparse: matrix not symmetric");
      }
    return op;
  }

  static SymmetricOperator diagonal(std::vector<double> d) {
    if (d.empty()) throw std::invalid_argument("SymmetricOperator::diagonal: empty diagonal");
    SymmetricOperator op;
    op.dim_ = d.size();
    op.kind_ = Kind::kDiagonal;
    op.diag_ = std::move(d);
    return op;
  }

  static SymmetricOperator identity(std::size_t n) {
    return diagonal(std::vector<double>(n, 1.0));
  }

  std::size_t dim() const { return dim_; }

  // Counted matrix-vector product; the one operation whose invocations the
  // cost accounting reports.
  std::vector<double> apply(std::span<const double> v) const {
    ++matvecs_;
    return apply_unrecorded(v);
  }

  // Same product without touching the counter (diagnostics, setup work).
  std::vector<double> apply_unrecorded(std::span<const double> v) const {
    if (v.size() != dim_)
      throw std::invalid_argument("SymmetricOperator::apply: dimension mismatch");
    std::vector<double> out(dim_, 0.0);
    switch (kind_) {
      case Kind::kDense:
        for (std::size_t i = 0; i < dim_; ++i) {
          double s = 0.0;
          const double* row = &dense_[i * dim_];
          for (std::size_t j = 0; j < dim_; ++j) s += row[j] * v[j];
          out[i] = s;
        }
        break;
      case Kind::kSparse:
        for (std::size_t i = 0; i < dim_; ++i) {
          double s = 0.0;
          for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) s += vals_[k] * v[cols_[k]];
          out[i] = s;
        }
        break;
      case Kind::kDiagonal:
        for (std::size_t i = 0; i < dim_; ++i) out[i] = diag_[i] * v[i];
        break;
    }
    return out;
  }

  std::uint64_t matvec_count() const { return matvecs_; }
  void reset_matvec_count() const { matvecs_ = 0; }

  // Main diagonal, needed by the damped-Jacobi smoother.
  std::vector<double> diagonal_entries() const {
    std::vector<double> d(dim_);
    for (std::size_t i = 0; i < dim_; ++i) d[i] = coefficient(i, i);
    return d;
  }

  // Single coefficient lookup (tests and construction-time checks only).
  double coefficient(std::size_t i, std::size_t j) const {
    if (i >= dim_ || j >= dim_)
      throw std::invalid_argument("SymmetricOperator::coefficient: index out of range");
    switch (kind_) {
      case Kind::kDense:
        return dense_[i * dim_ + j];
      case Kind::kSparse: {
        const auto begin = cols_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i]);
        const auto end = cols_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i + 1]);
        const auto it = std::lower_bound(begin, end, j);
        if (it == end || *it != j) return 0.0;
        return vals_[static_cast<std::size_t>(it - cols_.begin())];
      }
      case Kind::kDiagonal:
        return i == j ? diag_[i] : 0.0;
    }
    return 0.0;  // unreachable
  }

 private:
  enum class Kind { kDense, kSparse, kDiagonal };

  SymmetricOperator() = default;

  std::size_t dim_ = 0;
  Kind kind_ = Kind::kDiagonal;
  std::vector<double> dense_;
  std::vector<std::size_t> row_ptr_;
  std::vector<std::size_t> cols_;
  std::vector<double> vals_;
  std::vector<double> diag_;
  mutable std::uint64_t matvecs_ = 0;
};

// 2-D Laplacian on a grid_side x grid_side interior grid with homogeneous
// Dirichlet boundary: the classical 5-point stencil (4 on the diagonal, -1 to
// each grid neighbour), unscaled.  Dimension is grid_side^2.
inline SymmetricOperator poisson2d(std::size_t grid_side) {
  if (grid_side < 2) throw std::invalid_argument("poisson2d: grid_side must be at least 2");
  const std::size_t m = grid_side;
  const std::size_t n = m * m;
  std::vector<std::size_t> row_ptr(n + 1, 0);
  std::vector<std::size_t> cols;
  std::vector<double> vals;
  cols.reserve(5 * n);
  vals.reserve(5 * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t id = i * m + j;
      auto entry = [&](std::size_t col, double val) {
        cols.push_back(col);
        vals.push_back(val);
      };
      if (i > 0) entry(id - m, -1.0);
      if (j > 0) entry(id - 1, -1.0);
      entry(id, 4.0);
      if (j + 1 < m) entry(id + 1, -1.0);
      if (i + 1 < m) entry(id + m, -1.0);
      row_ptr[id + 1] = cols.size();
    }
  return SymmetricOperator::sparse(n, std::move(row_ptr), std::move(cols), std::move(vals));
}

// One eigenvalue/eigenvector of an operator; `index` is the 1-based rank in
// the ascending spectrum.
struct EigenPair {
  int index = 0;
  double value = 0.0;
  std::vector<double> vector;
};

// Analytic eigenpairs of poisson2d(grid_side), ascending, with deterministic
// lexicographic (p, q) tie-break for the degenerate (p,q)/(q,p) pairs.
// Eigenvectors are the tensor-product sine modes, normalized to unit length.
inline std::vector<EigenPair> poisson2d_eigenpairs(std::size_t grid_side) {
  if (grid_side < 2)
    throw std::invalid_argument("poisson2d_eigenpairs: grid_side must be at least 2");
  const std::size_t m = grid_side;
  const double theta = std::numbers::pi / static_cast<double>(m + 1);
  struct Mode {
    double value;
    std::size_t p, q;
  };
  std::vector<Mode> modes;
  modes.reserve(m * m);
  for (std::size_t p = 1; p <= m; ++p)
    for (std::size_t q = 1; q <= m; ++q) {
      // Summing the two 1-D contributions keeps lambda(p,q) bitwise equal to
      // lambda(q,p), so the tie-break below is deterministic.
      const double lp = 2.0 - 2.0 * std::cos(static_cast<double>(p) * theta);
      const double lq = 2.0 - 2.0 * std::cos(static_cast<double>(q) * theta);
      modes.push_back({lp + lq, p, q});
    }
  std::sort(modes.begin(), modes.end(), [](const Mode& a, const Mode& b) {
    if (a.value != b.value) return a.value < b.value;
    if (a.p != b.p) return a.p < b.p;
    return a.q < b.q;
  });
  std::vector<EigenPair> pairs(modes.size());
  for (std::size_t r = 0; r < modes.size(); ++r) {
    const Mode& mode = modes[r];
    EigenPair& pair = pairs[r];
    pair.index = static_cast<int>(r + 1);
    pair.value = mode.value;
    pair.vector.resize(m * m);
    for (std::size_t i = 1; i <= m; ++i)
      for (std::size_t j = 1; j <= m; ++j)
        pair.vector[(i - 1) * m + (j - 1)] =
            std::sin(static_cast<double>(i * mode.p) * theta) *
            std::sin(static_cast<double>(j * mode.q) * theta);
    scale(pair.vector, 1.0 / norm(pair.vector));
  }
  return pairs;
}

// Linear system A x = b with SPD A; the residual b - A x doubles as the
// negative gradient of the quadratic 0.5 x'Ax - b'x.
struct QuadraticProblem {
  SymmetricOperator op;
  std::vector<double> rhs;

  QuadraticProblem(SymmetricOperator a, std::vector<double> b)
      : op(std::move(a)), rhs(std::move(b)) {
    if (rhs.size() != op.dim())
      throw std::invalid_argument("QuadraticProblem: rhs dimension mismatch");
  }

  // Diagnostic evaluations; they use unrecorded applies so probing an
  // objective never perturbs the matvec accounting of a solver run.
  double objective(std::span<const double> x) const {
    const std::vector<double> ax = op.apply_unrecorded(x);
    return 0.5 * dot(x, ax) - dot(rhs, x);
  }

  std::vector<double> residual(std::span<const double> x) const {
    return subtract(rhs, op.apply_unrecorded(x));
  }
};

}  // namespace relgrad
