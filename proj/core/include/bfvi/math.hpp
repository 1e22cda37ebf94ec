#pragma once

// Scalar numeric helpers shared by the flows, models, and diagnostics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

namespace bfvi::num {

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double log_two_pi = 1.8378770664093454836;

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

// Inverse of softplus; defined for y > 0.
inline double softplus_inv(double y) {
  if (y > 30.0) return y;
  return std::log(std::expm1(y));
}

inline double log_sigmoid(double x) { return -softplus(-x); }

inline double normal_lpdf(double x, double mu, double sd) {
  const double z = (x - mu) / sd;
  return -0.5 * log_two_pi - std::log(sd) - 0.5 * z * z;
}

inline double std_normal_lpdf(double z) { return -0.5 * log_two_pi - 0.5 * z * z; }

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double cauchy_lpdf(double x, double loc, double scale) {
  const double z = (x - loc) / scale;
  return -std::log(pi * scale) - std::log1p(z * z);
}

// Density of |X| for X ~ Cauchy(0, scale); support x > 0.
inline double half_cauchy_lpdf(double x, double scale) {
  const double z = x / scale;
  return std::log(2.0) - std::log(pi * scale) - std::log1p(z * z);
}

inline double student_t_lpdf(double x, double nu, double mu, double sd) {
  const double z = (x - mu) / sd;
  return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
         0.5 * std::log(nu * pi) - std::log(sd) -
         0.5 * (nu + 1.0) * std::log1p(z * z / nu);
}

inline double log_beta_fn(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

inline double beta_lpdf(double x, double a, double b) {
  return (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - log_beta_fn(a, b);
}

inline double log_sum_exp(std::span<const double> v) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : v) mx = std::max(mx, x);
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

// --- sample statistics ------------------------------------------------------

inline double mean(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double variance(std::span<const double> v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

inline double sd(std::span<const double> v) { return std::sqrt(variance(v)); }

inline double skewness(std::span<const double> v) {
  const double m = mean(v);
  double s2 = 0.0, s3 = 0.0;
  for (double x : v) {
    const double d = x - m;
    s2 += d * d;
    s3 += d * d * d;
  }
  const double n = static_cast<double>(v.size());
  s2 /= n;
  s3 /= n;
  return s3 / std::pow(s2, 1.5);
}

inline double correlation(std::span<const double> a, std::span<const double> b) {
  const double ma = mean(a), mb = mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

inline double median(std::vector<double> v) {
  const std::size_t n = v.size();
  auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (n % 2 == 1) return *mid;
  const double hi = *mid;
  const double lo = *std::max_element(v.begin(), mid);
  return 0.5 * (lo + hi);
}

inline double quantile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t i = static_cast<std::size_t>(pos);
  if (i + 1 >= v.size()) return v.back();
  const double frac = pos - static_cast<double>(i);
  return v[i] * (1.0 - frac) + v[i + 1] * frac;
}

}  // namespace bfvi::num
