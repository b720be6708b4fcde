#pragma once

// Dense vector helpers shared by all solvers.  Everything operates on plain
// std::vector<double> / std::span<const double>; no expression templates, no
// aliasing tricks -- the kernels here are deliberately boring so the solver
// code reads like the algorithm statements.

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace relgrad {

inline void check_same_size(std::span<const double> a, std::span<const double> b,
                            const char* where) {
  if (a.size() != b.size()) throw std::invalid_argument(std::string(where) + ": size mismatch");
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  check_same_size(a, b, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::vector<double>& y) {
  check_same_size(x, y, "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline void scale(std::vector<double>& x, double alpha) {
  for (double& v : x) v *= alpha;
}

inline std::vector<double> scaled(std::span<const double> x, double alpha) {
  std::vector<double> y(x.begin(), x.end());
  scale(y, alpha);
  return y;
}

// a - b
inline std::vector<double> subtract(std::span<const double> a, std::span<const double> b) {
  check_same_size(a, b, "subtract");
  std::vector<double> c(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] - b[i];
  return c;
}

inline bool all_finite(std::span<const double> a) {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

}  // namespace relgrad
