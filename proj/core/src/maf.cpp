#include "bfvi/maf.hpp"

#include <cmath>
#include <stdexcept>

#include "bfvi/math.hpp"

namespace bfvi {

namespace {

thread_local std::vector<double> tl_act_a;
thread_local std::vector<double> tl_act_b;
thread_local std::vector<double> tl_net_out;
thread_local std::vector<double> tl_row_derived;
thread_local std::vector<ad::Var> tl_vact_a;
thread_local std::vector<ad::Var> tl_vact_b;
thread_local std::vector<ad::Var> tl_vnet_out;

double clamp_unit(double v) {
  if (v < MultivariateBernsteinFlow::kUnitClamp) {
    return MultivariateBernsteinFlow::kUnitClamp;
  }
  if (v > 1.0 - MultivariateBernsteinFlow::kUnitClamp) {
    return 1.0 - MultivariateBernsteinFlow::kUnitClamp;
  }
  return v;
}

}  // namespace

MaskSet build_masks(int dim, std::span<const int> hidden, int out_per_dim) {
  MaskSet set;
  if (dim <= 1) return set;

  // Inputs carry degrees 1..dim; hidden units cycle 1..dim-1.
  std::vector<int> prev_deg(static_cast<std::size_t>(dim));
  for (int j = 0; j < dim; ++j) prev_deg[static_cast<std::size_t>(j)] = j + 1;

  for (int h : hidden) {
    MaskLayer layer;
    layer.rows = h;
    layer.cols = static_cast<int>(prev_deg.size());
    layer.allow.assign(
        static_cast<std::size_t>(layer.rows) * static_cast<std::size_t>(layer.cols), 0);
    std::vector<int> deg(static_cast<std::size_t>(h));
    for (int r = 0; r < h; ++r) {
      deg[static_cast<std::size_t>(r)] = (r % (dim - 1)) + 1;
      for (int c = 0; c < layer.cols; ++c) {
        if (deg[static_cast<std::size_t>(r)] >= prev_deg[static_cast<std::size_t>(c)]) {
          layer.allow[static_cast<std::size_t>(r) * static_cast<std::size_t>(layer.cols) +
                      static_cast<std::size_t>(c)] = 1;
        }
      }
    }
    set.hidden_degrees.insert(set.hidden_degrees.end(), deg.begin(), deg.end());
    set.layers.push_back(std::move(layer));
    prev_deg = std::move(deg);
  }

  // Output block for dimension j (j = 2..dim) connects to units of degree
  // <= j-1, so block j never sees z_j or later inputs.
  MaskLayer out;
  out.rows = (dim - 1) * out_per_dim;
  out.cols = static_cast<int>(prev_deg.size());
  out.allow.assign(
      static_cast<std::size_t>(out.rows) * static_cast<std::size_t>(out.cols), 0);
  for (int blk = 0; blk < dim - 1; ++blk) {
    const int j = blk + 2;
    for (int i = 0; i < out_per_dim; ++i) {
      const int r = blk * out_per_dim + i;
      for (int c = 0; c < out.cols; ++c) {
        if (prev_deg[static_cast<std::size_t>(c)] <= j - 1) {
          out.allow[static_cast<std::size_t>(r) * static_cast<std::size_t>(out.cols) +
                    static_cast<std::size_t>(c)] = 1;
        }
      }
    }
  }
  set.layers.push_back(std::move(out));
  return set;
}

MultivariateBernsteinFlow::MultivariateBernsteinFlow(int dim, int order,
                                                     std::vector<int> hidden,
                                                     HiddenActivation activation)
    : dim_(dim), order_(order), activation_(activation), hidden_(std::move(hidden)) {
  if (dim_ < 1) throw std::invalid_argument("MultivariateBernsteinFlow: dim >= 1");
  if (order_ < 1) throw std::invalid_argument("MultivariateBernsteinFlow: order >= 1");
  masks_ = build_masks(dim_, hidden_, order_ + 1);

  params_.add_slice("theta1", static_cast<std::size_t>(order_) + 1);
  for (std::size_t l = 0; l < masks_.layers.size(); ++l) {
    const MaskLayer& m = masks_.layers[l];
    params_.add_slice("W" + std::to_string(l),
                      static_cast<std::size_t>(m.rows) * static_cast<std::size_t>(m.cols));
    params_.add_slice("b" + std::to_string(l), static_cast<std::size_t>(m.rows));
    std::vector<std::int32_t> begin(static_cast<std::size_t>(m.rows) + 1, 0);
    std::vector<std::int32_t> cols;
    for (int r = 0; r < m.rows; ++r) {
      for (int c = 0; c < m.cols; ++c) {
        if (m.allowed(r, c)) cols.push_back(c);
      }
      begin[static_cast<std::size_t>(r) + 1] = static_cast<std::int32_t>(cols.size());
    }
    row_begin_.push_back(std::move(begin));
    row_cols_.push_back(std::move(cols));
  }
  init_ramp(0);
}

void MultivariateBernsteinFlow::init_ramp(std::uint64_t seed) {
  Rng rng(seed);
  auto theta1 = params_.slice("theta1");
  theta1[0] = -3.0;
  const double inc = num::softplus_inv(6.0 / static_cast<double>(order_));
  for (std::size_t i = 1; i < theta1.size(); ++i) theta1[i] = inc;

  const std::size_t n_layers = masks_.layers.size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    const MaskLayer& m = masks_.layers[l];
    auto w = params_.slice("W" + std::to_string(l));
    auto b = params_.slice("b" + std::to_string(l));
    const bool is_output = (l + 1 == n_layers);
    for (int r = 0; r < m.rows; ++r) {
      int fan_in = 0;
      for (int c = 0; c < m.cols; ++c) fan_in += m.allowed(r, c) ? 1 : 0;
      const double s = is_output ? 0.0 : std::sqrt(3.0 / std::max(1, fan_in));
      for (int c = 0; c < m.cols; ++c) {
        const std::size_t idx =
            static_cast<std::size_t>(r) * static_cast<std::size_t>(m.cols) +
            static_cast<std::size_t>(c);
        w[idx] = m.allowed(r, c) ? s * (2.0 * rng.uniform01() - 1.0) : 0.0;
      }
      if (is_output) {
        const int i = r % (order_ + 1);
        b[static_cast<std::size_t>(r)] = i == 0 ? -3.0 : inc;
      } else {
        b[static_cast<std::size_t>(r)] = 0.0;
      }
    }
  }
}

void MultivariateBernsteinFlow::net_forward(std::span<const double> z,
                                            std::vector<double>& out) const {
  std::vector<double>* in = &tl_act_a;
  std::vector<double>* nxt = &tl_act_b;
  in->assign(z.begin(), z.end());
  const std::size_t n_layers = masks_.layers.size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    const MaskLayer& m = masks_.layers[l];
    const bool is_output = (l + 1 == n_layers);
    auto w = params_.slice("W" + std::to_string(l));
    auto b = params_.slice("b" + std::to_string(l));
    std::vector<double>& dst = is_output ? out : *nxt;
    dst.resize(static_cast<std::size_t>(m.rows));
    const auto& begin = row_begin_[l];
    const auto& cols = row_cols_[l];
    for (int r = 0; r < m.rows; ++r) {
      double acc = b[static_cast<std::size_t>(r)];
      const double* wrow =
          w.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(m.cols);
      for (std::int32_t s = begin[static_cast<std::size_t>(r)];
           s < begin[static_cast<std::size_t>(r) + 1]; ++s) {
        const std::int32_t c = cols[static_cast<std::size_t>(s)];
        acc += wrow[c] * (*in)[static_cast<std::size_t>(c)];
      }
      if (is_output) {
        dst[static_cast<std::size_t>(r)] = acc;
      } else if (activation_ == HiddenActivation::relu) {
        dst[static_cast<std::size_t>(r)] = acc > 0.0 ? acc : 0.0;
      } else if (activation_ == HiddenActivation::elu) {
        dst[static_cast<std::size_t>(r)] = acc > 0.0 ? acc : std::expm1(acc);
      } else {
        dst[static_cast<std::size_t>(r)] = std::tanh(acc);
      }
    }
    if (!is_output) std::swap(in, nxt);
  }
}

std::vector<std::vector<double>> MultivariateBernsteinFlow::emit_coefficients(
    std::span<const double> z) const {
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(dim_));
  auto theta1 = params_.slice("theta1");
  rows[0].assign(theta1.begin(), theta1.end());
  if (dim_ == 1) return rows;
  net_forward(z, tl_net_out);
  for (int d = 1; d < dim_; ++d) {
    const std::size_t off =
        static_cast<std::size_t>(d - 1) * (static_cast<std::size_t>(order_) + 1);
    rows[static_cast<std::size_t>(d)].assign(
        tl_net_out.begin() + static_cast<std::ptrdiff_t>(off),
        tl_net_out.begin() + static_cast<std::ptrdiff_t>(off) + order_ + 1);
  }
  return rows;
}

MvOutput MultivariateBernsteinFlow::forward(std::span<const double> z) const {
  MvOutput out;
  out.theta.resize(static_cast<std::size_t>(dim_));
  out.log_det = 0.0;
  auto theta1 = params_.slice("theta1");
  if (dim_ > 1) net_forward(z, tl_net_out);
  tl_row_derived.resize(static_cast<std::size_t>(order_) + 1);
  for (int d = 0; d < dim_; ++d) {
    std::span<const double> raw =
        d == 0 ? theta1
                : std::span<const double>(
                      tl_net_out.data() +
                          static_cast<std::size_t>(d - 1) *
                              (static_cast<std::size_t>(order_) + 1),
                      static_cast<std::size_t>(order_) + 1);
    reparam_coefficients_into(raw, tl_row_derived);
    const double v = clamp_unit(num::sigmoid(z[static_cast<std::size_t>(d)]));
    out.theta[static_cast<std::size_t>(d)] = bp_forward(tl_row_derived, v);
    const double fp = bp_derivative(tl_row_derived, v);
    out.log_det += std::log(v) + std::log(1.0 - v) + std::log(fp);
  }
  return out;
}

double MultivariateBernsteinFlow::log_q(std::span<const double> z) const {
  const MvOutput out = forward(z);
  double acc = 0.0;
  for (double zd : z) acc += num::std_normal_lpdf(zd);
  return acc - out.log_det;
}

MultivariateBernsteinFlow::Traced MultivariateBernsteinFlow::forward_traced(
    std::span<const ad::Var> lambda, std::span<const double> z) const {
  ad::Tape& t = *lambda.front().tape;
  const std::size_t width = static_cast<std::size_t>(order_) + 1;
  const std::size_t theta1_off = params_.offset_of("theta1");

  std::vector<ad::Var>* in = &tl_vact_a;
  std::vector<ad::Var>* nxt = &tl_vact_b;

  const std::size_t n_layers = masks_.layers.size();
  if (dim_ > 1) {
    // Hidden layers: one fused masked-affine node per unit, then tanh.
    for (std::size_t l = 0; l + 1 < n_layers; ++l) {
      const MaskLayer& m = masks_.layers[l];
      const std::size_t w_off = params_.offset_of("W" + std::to_string(l));
      const std::size_t b_off = params_.offset_of("b" + std::to_string(l));
      std::vector<ad::Var>& dst = *nxt;
      dst.clear();
      dst.reserve(static_cast<std::size_t>(m.rows));
      const auto& begin = row_begin_[l];
      const auto& cols = row_cols_[l];
      for (int r = 0; r < m.rows; ++r) {
        const std::size_t wrow =
            w_off + static_cast<std::size_t>(r) * static_cast<std::size_t>(m.cols);
        const ad::Var bias = lambda[b_off + static_cast<std::size_t>(r)];
        double acc = bias.value();
        if (l == 0) {
          for (std::int32_t s = begin[static_cast<std::size_t>(r)];
               s < begin[static_cast<std::size_t>(r) + 1]; ++s) {
            const std::int32_t c = cols[static_cast<std::size_t>(s)];
            const ad::Var w = lambda[wrow + static_cast<std::size_t>(c)];
            acc += w.value() * z[static_cast<std::size_t>(c)];
            t.push_parent(w.id, z[static_cast<std::size_t>(c)]);
          }
        } else {
          for (std::int32_t s = begin[static_cast<std::size_t>(r)];
               s < begin[static_cast<std::size_t>(r) + 1]; ++s) {
            const std::int32_t c = cols[static_cast<std::size_t>(s)];
            const ad::Var w = lambda[wrow + static_cast<std::size_t>(c)];
            const ad::Var h = (*in)[static_cast<std::size_t>(c)];
            acc += w.value() * h.value();
            t.push_parent(w.id, h.value());
            t.push_parent(h.id, w.value());
          }
        }
        t.push_parent(bias.id, 1.0);
        ad::Var affine{&t, t.seal(ad::OpKind::custom, acc), acc};
        if (activation_ == HiddenActivation::relu) {
          const double rv = affine.value() > 0.0 ? affine.value() : 0.0;
          dst.push_back(ad::Var{&t,
                                t.unary(ad::OpKind::custom, rv, affine.id,
                                        affine.value() > 0.0 ? 1.0 : 0.0),
                                rv});
        } else if (activation_ == HiddenActivation::elu) {
          const double a = affine.value();
          const double ev = a > 0.0 ? a : std::expm1(a);
          dst.push_back(ad::Var{&t,
                                t.unary(ad::OpKind::custom, ev, affine.id,
                                        a > 0.0 ? 1.0 : std::exp(a)),
                                ev});
        } else {
          dst.push_back(ad::tanh(affine));
        }
      }
      std::swap(in, nxt);
    }
  }

  Traced out;
  out.theta.reserve(static_cast<std::size_t>(dim_));
  double const_log_det = 0.0;
  ad::Var traced_log_det;

  // Dimension 1: directly optimized coefficients.
  {
    const double v = clamp_unit(num::sigmoid(z[0]));
    BpTraced bp = bp_eval_from_raw_traced(
        std::span<const ad::Var>(lambda.data() + theta1_off, width), v);
    out.theta.push_back(bp.value);
    const_log_det += std::log(v) + std::log(1.0 - v);
    traced_log_det = bp.log_deriv;
  }

  // Dimensions 2..p: the whole output block, monotone reparameterization, and
  // polynomial evaluation collapse into two fused nodes per dimension, with
  // partials against the block weights, block biases, and hidden units.
  if (dim_ > 1) {
    const std::vector<ad::Var>& hidden = *in;
    const MaskLayer& m = masks_.layers[n_layers - 1];
    const std::size_t w_off =
        params_.offset_of("W" + std::to_string(n_layers - 1));
    const std::size_t b_off =
        params_.offset_of("b" + std::to_string(n_layers - 1));
    const auto& begin = row_begin_[n_layers - 1];
    const auto& cols = row_cols_[n_layers - 1];

    thread_local std::vector<double> raw_vals;
    thread_local std::vector<double> h_partials;
    thread_local BpRawEval eval;
    raw_vals.resize(width);

    for (int d = 1; d < dim_; ++d) {
      const std::size_t r0 =
          static_cast<std::size_t>(d - 1) * width;  // first block row
      // All rows of one block share the same permitted-column set.
      const std::int32_t cs = begin[r0];
      const std::int32_t ce = begin[r0 + 1];
      const std::size_t n_cols = static_cast<std::size_t>(ce - cs);

      for (std::size_t i = 0; i < width; ++i) {
        const std::size_t row = r0 + i;
        const std::size_t wrow =
            w_off + row * static_cast<std::size_t>(m.cols);
        double acc = lambda[b_off + row].value();
        for (std::int32_t s = begin[row]; s < begin[row + 1]; ++s) {
          const std::int32_t c = cols[static_cast<std::size_t>(s)];
          acc += lambda[wrow + static_cast<std::size_t>(c)].value() *
                 hidden[static_cast<std::size_t>(c)].value();
        }
        raw_vals[i] = acc;
      }
      const double v = clamp_unit(num::sigmoid(z[static_cast<std::size_t>(d)]));
      bp_raw_eval(raw_vals, v, eval);

      auto emit_node = [&](const std::vector<double>& d_raw, double value) {
        h_partials.assign(n_cols, 0.0);
        for (std::size_t i = 0; i < width; ++i) {
          const std::size_t row = r0 + i;
          const std::size_t wrow =
              w_off + row * static_cast<std::size_t>(m.cols);
          const double p = d_raw[i];
          t.push_parent(lambda[b_off + row].id, p);
          for (std::int32_t s = begin[row]; s < begin[row + 1]; ++s) {
            const std::int32_t c = cols[static_cast<std::size_t>(s)];
            const ad::Var& w = lambda[wrow + static_cast<std::size_t>(c)];
            t.push_parent(w.id, p * hidden[static_cast<std::size_t>(c)].value());
            h_partials[static_cast<std::size_t>(s - begin[row])] += p * w.value();
          }
        }
        for (std::size_t k = 0; k < n_cols; ++k) {
          const std::int32_t c = cols[static_cast<std::size_t>(cs) + k];
          t.push_parent(hidden[static_cast<std::size_t>(c)].id, h_partials[k]);
        }
        return ad::Var{&t, t.seal(ad::OpKind::custom, value), value};
      };
      ad::Var value = emit_node(eval.d_value, eval.value);
      ad::Var log_deriv = emit_node(eval.d_log_deriv, eval.log_deriv);

      out.theta.push_back(value);
      const_log_det += std::log(v) + std::log(1.0 - v);
      traced_log_det = traced_log_det + log_deriv;
    }
  }
  out.log_det = traced_log_det + const_log_det;
  return out;
}

}  // namespace bfvi
