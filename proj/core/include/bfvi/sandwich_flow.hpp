#pragma once

// One-dimensional monotone flow: affine -> sigmoid -> Bernstein polynomial ->
// affine, mapping a standard-normal base variable to the target axis. Both
// affine slopes go through softplus, so the composite is strictly increasing
// for any finite parameter values.

#include <span>
#include <vector>

#include "bfvi/bernstein.hpp"
#include "bfvi/tape.hpp"

namespace bfvi {

struct FlowOutput {
  double theta;
  double log_det;  // log |d theta / d z|
};

class SandwichFlow {
 public:
  // Sigmoid output is clamped to [kUnitClamp, 1-kUnitClamp]; the log-det terms
  // use the clamped value, so the forward map and its density stay a coherent
  // pair at extreme z.
  static constexpr double kUnitClamp = 1e-6;

  SandwichFlow(BernsteinCoefficients coeffs, double a_raw, double b,
               double alpha_raw, double beta);

  // Identity-slope affines, derived coefficients a linear ramp over [-3, 3].
  static SandwichFlow ramp_init(int order);

  // Parameter layout used by the trainer: [a_raw, b, alpha_raw, beta,
  // raw_0..raw_M].
  static SandwichFlow from_params(std::span<const double> lambda, int order);
  std::vector<double> params() const;
  int order() const { return coeffs_.order(); }
  std::size_t param_count() const { return 4 + coeffs_.raw().size(); }

  FlowOutput forward(double z) const;

  // log q(z-preimage) under a standard-normal base.
  double log_q(double z) const;

  // Solves forward(z).theta == theta by bisection plus Newton polish. Throws
  // std::range_error when theta is outside the attainable open interval.
  double inverse(double theta, double tol) const;

  const BernsteinCoefficients& coeffs() const { return coeffs_; }
  double a() const;      // softplus(a_raw)
  double alpha() const;  // softplus(alpha_raw)
  double b() const { return b_; }
  double beta() const { return beta_; }

  struct Traced {
    ad::Var theta;
    ad::Var log_det;
  };

  // Traced forward pass. `lambda` follows the from_params layout; `derived`
  // is the per-step reparameterized coefficient chain (shared across the
  // samples of one training step).
  static Traced forward_traced(std::span<const ad::Var> lambda,
                               std::span<const ad::Var> derived, double z);

 private:
  BernsteinCoefficients coeffs_;
  double a_raw_, b_, alpha_raw_, beta_;
};

}  // namespace bfvi
