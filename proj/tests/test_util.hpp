#pragma once

// Shared helpers for the test suites: finite-difference oracles, random flow
// generators, and a small dense LU determinant.

#include <cmath>
#include <functional>
#include <span>
#include <vector>

#include "bfvi/rng.hpp"
#include "bfvi/sandwich_flow.hpp"

namespace bfvi::test {

inline double central_diff(const std::function<double(double)>& f, double x,
                           double h = 1e-5) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

// Central-difference gradient of a multivariate function.
inline std::vector<double> fd_gradient(
    const std::function<double(std::span<const double>)>& f,
    std::span<const double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  std::vector<double> xp(x.begin(), x.end());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double orig = xp[i];
    xp[i] = orig + h;
    const double fp = f(xp);
    xp[i] = orig - h;
    const double fm = f(xp);
    xp[i] = orig;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Mixed relative/absolute agreement: err <= abs_tol + rel_tol * |want|.
inline bool grad_close(double got, double want, double rel_tol = 1e-4,
                       double abs_tol = 1e-7) {
  return std::abs(got - want) <= abs_tol + rel_tol * std::abs(want);
}

inline SandwichFlow random_sandwich(Rng& rng, int order) {
  std::vector<double> raw(static_cast<std::size_t>(order) + 1);
  raw[0] = -2.0 + rng.normal();
  for (int i = 1; i <= order; ++i) {
    raw[static_cast<std::size_t>(i)] = rng.normal() * 0.8;
  }
  return SandwichFlow(BernsteinCoefficients(std::move(raw)),
                      0.3 * rng.normal(), 0.4 * rng.normal(),
                      0.3 * rng.normal(), 0.4 * rng.normal());
}

// Determinant by partial-pivot LU; small systems only.
inline double lu_determinant(std::vector<std::vector<double>> a) {
  const std::size_t n = a.size();
  double det = 1.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    }
    if (piv != c) {
      std::swap(a[piv], a[c]);
      det = -det;
    }
    if (a[c][c] == 0.0) return 0.0;
    det *= a[c][c];
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
    }
  }
  return det;
}

// Solves A x = b in place by Gaussian elimination; small systems only.
inline std::vector<double> solve_dense(std::vector<std::vector<double>> a,
                                       std::vector<double> b) {
  const std::size_t n = a.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(a[r][c]) > std::abs(a[piv][c])) piv = r;
    }
    std::swap(a[piv], a[c]);
    std::swap(b[piv], b[c]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = a[r][c] / a[c][c];
      for (std::size_t k = c; k < n; ++k) a[r][k] -= f * a[c][k];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t i = n; i-- > 0;) {
    double acc = b[i];
    for (std::size_t k = i + 1; k < n; ++k) acc -= a[i][k] * x[k];
    x[i] = acc / a[i][i];
  }
  return x;
}

}  // namespace bfvi::test
