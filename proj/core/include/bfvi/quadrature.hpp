#pragma once

#include <functional>
#include <span>
#include <vector>

namespace bfvi {

struct QuadratureRule {
  std::vector<double> nodes;    // on [-1, 1]
  std::vector<double> weights;
};

// Gauss-Legendre nodes and weights by Newton iteration on the Legendre
// recurrence; results are cached per n.
const QuadratureRule& gauss_legendre(int n);

// Integral of f over [lo, hi].
double integrate(const std::function<double(double)>& f, double lo, double hi,
                 int n);

// log of the integral of exp(log_f) over [lo, hi], accumulated with
// log-sum-exp so the integrand may span hundreds of orders of magnitude.
double integrate_log(const std::function<double(double)>& log_f, double lo,
                     double hi, int n);

}  // namespace bfvi
