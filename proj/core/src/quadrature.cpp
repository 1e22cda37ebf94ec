#include "bfvi/quadrature.hpp"

#include <cmath>
#include <map>
#include <mutex>

#include "bfvi/math.hpp"

namespace bfvi {

namespace {

QuadratureRule make_rule(int n) {
  QuadratureRule rule;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));
  const int m = (n + 1) / 2;
  for (int i = 0; i < m; ++i) {
    double z = std::cos(num::pi * (static_cast<double>(i) + 0.75) /
                        (static_cast<double>(n) + 0.5));
    double z1, pp;
    do {
      double p1 = 1.0, p2 = 0.0;
      for (int j = 0; j < n; ++j) {
        const double p3 = p2;
        p2 = p1;
        p1 = ((2.0 * j + 1.0) * z * p2 - static_cast<double>(j) * p3) /
             (static_cast<double>(j) + 1.0);
      }
      pp = static_cast<double>(n) * (z * p1 - p2) / (z * z - 1.0);
      z1 = z;
      z = z1 - p1 / pp;
    } while (std::abs(z - z1) > 1e-15);
    rule.nodes[static_cast<std::size_t>(i)] = -z;
    rule.nodes[static_cast<std::size_t>(n - 1 - i)] = z;
    const double w = 2.0 / ((1.0 - z * z) * pp * pp);
    rule.weights[static_cast<std::size_t>(i)] = w;
    rule.weights[static_cast<std::size_t>(n - 1 - i)] = w;
  }
  return rule;
}

}  // namespace

const QuadratureRule& gauss_legendre(int n) {
  static std::mutex mtx;
  static std::map<int, QuadratureRule> cache;
  std::lock_guard<std::mutex> lock(mtx);
  auto it = cache.find(n);
  if (it == cache.end()) it = cache.emplace(n, make_rule(n)).first;
  return it->second;
}

double integrate(const std::function<double(double)>& f, double lo, double hi,
                 int n) {
  const QuadratureRule& rule = gauss_legendre(n);
  const double mid = 0.5 * (hi + lo);
  const double half = 0.5 * (hi - lo);
  double acc = 0.0;
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    acc += rule.weights[i] * f(mid + half * rule.nodes[i]);
  }
  return half * acc;
}

double integrate_log(const std::function<double(double)>& log_f, double lo,
                     double hi, int n) {
  const QuadratureRule& rule = gauss_legendre(n);
  const double mid = 0.5 * (hi + lo);
  const double half = 0.5 * (hi - lo);
  std::vector<double> terms(rule.nodes.size());
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    terms[i] = std::log(rule.weights[i]) + log_f(mid + half * rule.nodes[i]);
  }
  return std::log(half) + num::log_sum_exp(terms);
}

}  // namespace bfvi
