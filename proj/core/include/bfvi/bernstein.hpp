#pragma once

// Bernstein-basis evaluation and the monotone coefficient reparameterization.
//
// A polynomial in Bernstein form of order M with strictly increasing
// coefficients is strictly increasing on [0,1]; that property is what makes
// these polynomials usable as a flow transform. All kernels work on the
// plain Bernstein basis b_{i,M}(z) = C(M,i) z^i (1-z)^{M-i}; the Beta-density
// scaling (M+1) cancels against the 1/(M+1) in the coefficient convention.

#include <span>
#include <vector>

#include "bfvi/tape.hpp"

namespace bfvi {

// Fills out[0..order] with b_{i,order}(z). Evaluated by the normalized-ratio
// recurrence started at the largest term, which is stable for orders into the
// hundreds without log-space arithmetic.
void bernstein_basis(int order, double z, std::span<double> out);

// Beta(i+1, order-i+1) probability density at z, i.e. (order+1)*b_{i,order}(z).
// Throws std::domain_error when i or z is out of range.
double beta_basis_density(int i, int order, double z);

// theta_0 = raw_0, theta_i = theta_{i-1} + softplus(raw_i). The increment is
// nudged by one ulp when softplus underflows relative to the running value, so
// the output is strictly increasing for every finite input.
std::vector<double> reparam_coefficients(std::span<const double> raw);
void reparam_coefficients_into(std::span<const double> raw, std::span<double> out);

// Strictly increasing coefficient set; caches the derived coefficients.
class BernsteinCoefficients {
 public:
  explicit BernsteinCoefficients(std::vector<double> raw);

  int order() const { return static_cast<int>(raw_.size()) - 1; }
  const std::vector<double>& raw() const { return raw_; }
  const std::vector<double>& derived() const { return derived_; }

 private:
  std::vector<double> raw_;
  std::vector<double> derived_;
};

// sum_i b_{i,M}(z) * theta_i over derived coefficients; z in [0,1].
double bp_forward(const BernsteinCoefficients& coeffs, double z);
double bp_forward(std::span<const double> derived, double z);

// d/dz of bp_forward via the degree-lowering identity
//   f'(z) = M * sum_{i<M} (theta_{i+1}-theta_i) b_{i,M-1}(z);
// strictly positive on (0,1) for strictly increasing coefficients.
double bp_derivative(const BernsteinCoefficients& coeffs, double z);
double bp_derivative(std::span<const double> derived, double z);

// Second derivative, needed for the gradient of log f'.
double bp_second_derivative(std::span<const double> derived, double z);

// --- traced evaluation --------------------------------------------------------
//
// The polynomial and its log-derivative enter the tape as two fused nodes with
// analytic partials; this keeps the per-sample tape size O(1) nodes instead of
// O(M) and is what makes flow training affordable.

struct BpTraced {
  ad::Var value;      // f(v)
  ad::Var log_deriv;  // log f'(v)
};

// Coefficients already derived (each a traced node); v traced.
BpTraced bp_eval_traced(std::span<const ad::Var> derived, ad::Var v);

// Straight from unconstrained coefficients with the reparameterization chain
// folded into the partials; v is a constant. Used by the autoregressive flow,
// where each sample has its own coefficient rows.
BpTraced bp_eval_from_raw_traced(std::span<const ad::Var> raw, double v);

// Plain-double work product behind the fused nodes: the polynomial value, its
// log-derivative, and both partials with respect to the raw coefficients.
// Callers reuse the buffers across evaluations.
struct BpRawEval {
  double value = 0.0;
  double log_deriv = 0.0;
  std::vector<double> d_value;      // d value / d raw_i
  std::vector<double> d_log_deriv;  // d log_deriv / d raw_i
};

// Throws ad::EvalError on non-finite coefficients or a non-positive
// derivative.
void bp_raw_eval(std::span<const double> raw, double v, BpRawEval& out);

// Mirrors reparam_coefficients on the tape (same fix-up rule), for flows whose
// derived coefficients are shared across samples within a training step.
std::vector<ad::Var> reparam_traced(std::span<const ad::Var> raw);

}  // namespace bfvi
