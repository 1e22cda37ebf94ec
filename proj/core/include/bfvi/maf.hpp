#pragma once

// Multivariate triangular Bernstein flow. A masked autoregressive network maps
// z_1..z_{j-1} to the raw Bernstein coefficients of dimension j; dimension 1
// has directly optimized coefficients. The Jacobian is lower triangular, so
// its log-determinant is the sum of the per-dimension diagonal terms.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bfvi/bernstein.hpp"
#include "bfvi/rng.hpp"
#include "bfvi/tape.hpp"

namespace bfvi {

struct MaskLayer {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> allow;  // row-major, 1 = connection permitted

  bool allowed(int r, int c) const {
    return allow[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) +
                 static_cast<std::size_t>(c)] != 0;
  }
};

struct MaskSet {
  std::vector<MaskLayer> layers;   // input->h1, h1->h2, ..., hL->output
  std::vector<int> hidden_degrees;  // degree per hidden unit, per layer, flattened
};

// Sequential-degree masking: inputs get degrees 1..dim, hidden units cycle
// degrees 1..dim-1, output block for dimension j accepts units of degree
// <= j-1. For dim == 1 the set is empty and all coefficients come from the
// directly optimized first row.
MaskSet build_masks(int dim, std::span<const int> hidden, int out_per_dim);

struct MvOutput {
  std::vector<double> theta;
  double log_det;
};

enum class HiddenActivation { tanh, relu, elu };

class MultivariateBernsteinFlow {
 public:
  static constexpr double kUnitClamp = 1e-6;

  MultivariateBernsteinFlow(int dim, int order,
                            std::vector<int> hidden = {10, 10},
                            HiddenActivation activation = HiddenActivation::elu);

  int dim() const { return dim_; }
  int order() const { return order_; }
  const MaskSet& masks() const { return masks_; }

  ad::ParamVector& params() { return params_; }
  const ad::ParamVector& params() const { return params_; }

  // Ramp first-row coefficients, fan-in-scaled uniform hidden weights, zero
  // output weights with ramp output biases: the initial flow factorizes into
  // independent near-linear one-dimensional maps.
  void init_ramp(std::uint64_t seed);

  // Raw coefficient matrix, row j of length order+1. Row 0 is constant in z;
  // row j depends on z_0..z_{j-1} only.
  std::vector<std::vector<double>> emit_coefficients(
      std::span<const double> z) const;

  MvOutput forward(std::span<const double> z) const;
  double log_q(std::span<const double> z) const;

  struct Traced {
    std::vector<ad::Var> theta;
    ad::Var log_det;
  };
  Traced forward_traced(std::span<const ad::Var> lambda,
                        std::span<const double> z) const;

 private:
  void net_forward(std::span<const double> z, std::vector<double>& out) const;

  int dim_;
  int order_;
  HiddenActivation activation_ = HiddenActivation::tanh;
  std::vector<int> hidden_;
  MaskSet masks_;
  ad::ParamVector params_;
  // CSR of permitted columns per output row, per layer.
  std::vector<std::vector<std::int32_t>> row_begin_;
  std::vector<std::vector<std::int32_t>> row_cols_;
};

}  // namespace bfvi
