#include "bfvi/sandwich_flow.hpp"

#include <cmath>
#include <stdexcept>

#include "bfvi/math.hpp"

namespace bfvi {

namespace {

double clamp_unit(double v) {
  if (v < SandwichFlow::kUnitClamp) return SandwichFlow::kUnitClamp;
  if (v > 1.0 - SandwichFlow::kUnitClamp) return 1.0 - SandwichFlow::kUnitClamp;
  return v;
}

// |u| beyond this saturates the clamped sigmoid.
double saturation_u() {
  return std::log((1.0 - SandwichFlow::kUnitClamp) / SandwichFlow::kUnitClamp);
}

}  // namespace

SandwichFlow::SandwichFlow(BernsteinCoefficients coeffs, double a_raw, double b,
                           double alpha_raw, double beta)
    : coeffs_(std::move(coeffs)),
      a_raw_(a_raw),
      b_(b),
      alpha_raw_(alpha_raw),
      beta_(beta) {}

SandwichFlow SandwichFlow::ramp_init(int order) {
  std::vector<double> raw(static_cast<std::size_t>(order) + 1);
  raw[0] = -3.0;
  const double inc = num::softplus_inv(6.0 / static_cast<double>(order));
  for (int i = 1; i <= order; ++i) raw[static_cast<std::size_t>(i)] = inc;
  const double unit_slope = num::softplus_inv(1.0);
  return SandwichFlow(BernsteinCoefficients(std::move(raw)), unit_slope, 0.0,
                      unit_slope, 0.0);
}

SandwichFlow SandwichFlow::from_params(std::span<const double> lambda,
                                       int order) {
  std::vector<double> raw(lambda.begin() + 4, lambda.end());
  if (static_cast<int>(raw.size()) != order + 1) {
    throw std::invalid_argument("SandwichFlow::from_params: bad length");
  }
  return SandwichFlow(BernsteinCoefficients(std::move(raw)), lambda[0],
                      lambda[1], lambda[2], lambda[3]);
}

std::vector<double> SandwichFlow::params() const {
  std::vector<double> out = {a_raw_, b_, alpha_raw_, beta_};
  out.insert(out.end(), coeffs_.raw().begin(), coeffs_.raw().end());
  return out;
}

double SandwichFlow::a() const { return num::softplus(a_raw_); }
double SandwichFlow::alpha() const { return num::softplus(alpha_raw_); }

FlowOutput SandwichFlow::forward(double z) const {
  const double av = num::softplus(a_raw_);
  const double u = av * z + b_;
  const double v = clamp_unit(num::sigmoid(u));
  const double f = bp_forward(coeffs_.derived(), v);
  const double fp = bp_derivative(coeffs_.derived(), v);
  const double alphav = num::softplus(alpha_raw_);
  const double theta = alphav * f + beta_;
  const double log_det = std::log(av) + std::log(v) + std::log(1.0 - v) +
                         std::log(fp) + std::log(alphav);
  return {theta, log_det};
}

double SandwichFlow::log_q(double z) const {
  return num::std_normal_lpdf(z) - forward(z).log_det;
}

double SandwichFlow::inverse(double theta, double tol) const {
  if (!(tol > 0.0)) throw std::invalid_argument("inverse: tol must be > 0");
  const double av = num::softplus(a_raw_);
  // z beyond the sigmoid saturation point leaves theta constant; the
  // attainable range is the open interval between those plateau values.
  const double margin = 1.0;
  double z_lo = (-saturation_u() - b_) / av - margin;
  double z_hi = (saturation_u() - b_) / av + margin;
  const double th_lo = forward(z_lo).theta;
  const double th_hi = forward(z_hi).theta;
  if (!(theta > th_lo && theta < th_hi)) {
    throw std::range_error("inverse: theta outside attainable range");
  }
  double lo = z_lo, hi = z_hi;
  double z = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    z = 0.5 * (lo + hi);
    const double f = forward(z).theta;
    if (std::abs(f - theta) <= tol) break;
    if (f < theta) {
      lo = z;
    } else {
      hi = z;
    }
  }
  // Newton polish using the exact jacobian.
  for (int it = 0; it < 8; ++it) {
    const FlowOutput out = forward(z);
    const double err = out.theta - theta;
    if (std::abs(err) <= tol) break;
    const double step = err / std::exp(out.log_det);
    const double zn = z - step;
    if (zn <= lo || zn >= hi) break;
    z = zn;
  }
  return z;
}

SandwichFlow::Traced SandwichFlow::forward_traced(
    std::span<const ad::Var> lambda, std::span<const ad::Var> derived,
    double z) {
  ad::Var a = ad::softplus(lambda[0]);
  ad::Var u = a * z + lambda[1];
  ad::Var v = ad::clamp(ad::sigmoid(u), kUnitClamp, 1.0 - kUnitClamp);
  BpTraced bp = bp_eval_traced(derived, v);
  ad::Var alpha = ad::softplus(lambda[2]);
  ad::Var theta = alpha * bp.value + lambda[3];
  ad::Var log_det =
      ad::log(a) + ad::log(v) + ad::log(1.0 - v) + bp.log_deriv + ad::log(alpha);
  return {theta, log_det};
}

}  // namespace bfvi
