#include "bfvi/bernstein.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "bfvi/math.hpp"

namespace bfvi {

namespace {

thread_local std::vector<double> tl_basis_m;
thread_local std::vector<double> tl_basis_m1;
thread_local std::vector<double> tl_basis_m2;
thread_local std::vector<double> tl_derived;
thread_local std::vector<double> tl_suffix;

void check_unit_interval(double z) {
  if (!(z >= 0.0 && z <= 1.0)) {
    throw std::domain_error("bernstein: z must lie in [0,1]");
  }
}

// theta_0 = raw_0, theta_i = theta_{i-1} + softplus(raw_i), nudged by one ulp
// when the increment underflows so the output stays strictly increasing.
template <class RawAt>
void reparam_into_impl(std::size_t n, RawAt raw_at, std::span<double> out) {
  out[0] = raw_at(0);
  for (std::size_t i = 1; i < n; ++i) {
    double next = out[i - 1] + num::softplus(raw_at(i));
    if (!(next > out[i - 1])) {
      next = std::nextafter(out[i - 1], std::numeric_limits<double>::infinity());
    }
    out[i] = next;
  }
}

double weighted_deriv(std::span<const double> derived,
                      std::span<const double> basis_m1) {
  const int m = static_cast<int>(derived.size()) - 1;
  double acc = 0.0;
  for (int i = 0; i < m; ++i) {
    acc += (derived[static_cast<std::size_t>(i + 1)] -
            derived[static_cast<std::size_t>(i)]) *
           basis_m1[static_cast<std::size_t>(i)];
  }
  return static_cast<double>(m) * acc;
}

}  // namespace

void bernstein_basis(int order, double z, std::span<double> out) {
  check_unit_interval(z);
  const int m = order;
  if (z <= 0.0) {
    for (int i = 0; i <= m; ++i) out[static_cast<std::size_t>(i)] = 0.0;
    out[0] = 1.0;
    return;
  }
  if (z >= 1.0) {
    for (int i = 0; i <= m; ++i) out[static_cast<std::size_t>(i)] = 0.0;
    out[static_cast<std::size_t>(m)] = 1.0;
    return;
  }
  // Unnormalized values by ratio recurrence from the largest term; ratios
  // moving away from the mode are < 1, so nothing overflows. The exact
  // partition of unity then fixes the scale.
  int i0 = static_cast<int>(static_cast<double>(m + 1) * z);
  if (i0 > m) i0 = m;
  out[static_cast<std::size_t>(i0)] = 1.0;
  const double r = z / (1.0 - z);
  for (int i = i0; i < m; ++i) {
    out[static_cast<std::size_t>(i + 1)] =
        out[static_cast<std::size_t>(i)] *
        (static_cast<double>(m - i) / static_cast<double>(i + 1)) * r;
  }
  const double rinv = (1.0 - z) / z;
  for (int i = i0; i > 0; --i) {
    out[static_cast<std::size_t>(i - 1)] =
        out[static_cast<std::size_t>(i)] *
        (static_cast<double>(i) / static_cast<double>(m - i + 1)) * rinv;
  }
  double s = 0.0;
  for (int i = 0; i <= m; ++i) s += out[static_cast<std::size_t>(i)];
  const double scale = 1.0 / s;
  for (int i = 0; i <= m; ++i) out[static_cast<std::size_t>(i)] *= scale;
}

double beta_basis_density(int i, int order, double z) {
  if (order < 0 || i < 0 || i > order) {
    throw std::domain_error("beta_basis_density: index out of range");
  }
  check_unit_interval(z);
  tl_basis_m.resize(static_cast<std::size_t>(order) + 1);
  bernstein_basis(order, z, tl_basis_m);
  return static_cast<double>(order + 1) * tl_basis_m[static_cast<std::size_t>(i)];
}

std::vector<double> reparam_coefficients(std::span<const double> raw) {
  std::vector<double> out(raw.size());
  reparam_coefficients_into(raw, out);
  return out;
}

void reparam_coefficients_into(std::span<const double> raw,
                               std::span<double> out) {
  for (double r : raw) {
    if (!std::isfinite(r)) {
      throw std::invalid_argument("reparam_coefficients: non-finite input");
    }
  }
  reparam_into_impl(raw.size(), [&](std::size_t i) { return raw[i]; }, out);
}

BernsteinCoefficients::BernsteinCoefficients(std::vector<double> raw)
    : raw_(std::move(raw)) {
  if (raw_.size() < 2) {
    throw std::invalid_argument("BernsteinCoefficients: order must be >= 1");
  }
  derived_ = reparam_coefficients(raw_);
}

double bp_forward(std::span<const double> derived, double z) {
  check_unit_interval(z);
  const int m = static_cast<int>(derived.size()) - 1;
  tl_basis_m.resize(derived.size());
  bernstein_basis(m, z, tl_basis_m);
  double acc = 0.0;
  for (std::size_t i = 0; i < derived.size(); ++i) acc += tl_basis_m[i] * derived[i];
  return acc;
}

double bp_forward(const BernsteinCoefficients& coeffs, double z) {
  return bp_forward(coeffs.derived(), z);
}

double bp_derivative(std::span<const double> derived, double z) {
  check_unit_interval(z);
  const int m = static_cast<int>(derived.size()) - 1;
  if (m == 0) return 0.0;
  tl_basis_m1.resize(static_cast<std::size_t>(m));
  bernstein_basis(m - 1, z, tl_basis_m1);
  return weighted_deriv(derived, tl_basis_m1);
}

double bp_derivative(const BernsteinCoefficients& coeffs, double z) {
  return bp_derivative(coeffs.derived(), z);
}

double bp_second_derivative(std::span<const double> derived, double z) {
  check_unit_interval(z);
  const int m = static_cast<int>(derived.size()) - 1;
  if (m < 2) return 0.0;
  tl_basis_m2.resize(static_cast<std::size_t>(m) - 1);
  bernstein_basis(m - 2, z, tl_basis_m2);
  double acc = 0.0;
  for (int i = 0; i + 2 <= m; ++i) {
    const double dd = derived[static_cast<std::size_t>(i + 2)] -
                      2.0 * derived[static_cast<std::size_t>(i + 1)] +
                      derived[static_cast<std::size_t>(i)];
    acc += dd * tl_basis_m2[static_cast<std::size_t>(i)];
  }
  return static_cast<double>(m) * static_cast<double>(m - 1) * acc;
}

BpTraced bp_eval_traced(std::span<const ad::Var> derived, ad::Var v) {
  ad::Tape& t = *v.tape;
  const int m = static_cast<int>(derived.size()) - 1;
  const double vz = v.value();
  tl_derived.resize(derived.size());
  for (std::size_t i = 0; i < derived.size(); ++i) tl_derived[i] = derived[i].value();

  tl_basis_m.resize(derived.size());
  bernstein_basis(m, vz, tl_basis_m);
  tl_basis_m1.resize(static_cast<std::size_t>(m));
  bernstein_basis(m - 1, vz, tl_basis_m1);

  double f = 0.0;
  for (std::size_t i = 0; i < derived.size(); ++i) f += tl_basis_m[i] * tl_derived[i];
  const double fp = weighted_deriv(tl_derived, tl_basis_m1);
  const double fpp = bp_second_derivative(tl_derived, vz);

  for (std::size_t i = 0; i < derived.size(); ++i) {
    t.push_parent(derived[i].id, tl_basis_m[i]);
  }
  t.push_parent(v.id, fp);
  ad::Var value{&t, t.seal(ad::OpKind::custom, f), f};

  if (!(fp > 0.0)) {
    throw ad::EvalError("bp_eval_traced: non-positive derivative");
  }
  // d log f' / d theta_i = M (b_{i-1,M-1} - b_{i,M-1}) / f'
  for (int i = 0; i <= m; ++i) {
    const double left = i > 0 ? tl_basis_m1[static_cast<std::size_t>(i - 1)] : 0.0;
    const double right = i < m ? tl_basis_m1[static_cast<std::size_t>(i)] : 0.0;
    t.push_parent(derived[static_cast<std::size_t>(i)].id,
                  static_cast<double>(m) * (left - right) / fp);
  }
  t.push_parent(v.id, fpp / fp);
  const double lfp = std::log(fp);
  ad::Var log_deriv{&t, t.seal(ad::OpKind::custom, lfp), lfp};
  return {value, log_deriv};
}

void bp_raw_eval(std::span<const double> raw, double v, BpRawEval& out) {
  const int m = static_cast<int>(raw.size()) - 1;
  for (double r : raw) {
    if (!std::isfinite(r)) {
      throw ad::EvalError("bp_raw_eval: non-finite coefficient");
    }
  }
  tl_derived.resize(raw.size());
  reparam_into_impl(raw.size(), [&](std::size_t i) { return raw[i]; }, tl_derived);

  tl_basis_m.resize(raw.size());
  bernstein_basis(m, v, tl_basis_m);
  tl_basis_m1.resize(static_cast<std::size_t>(m));
  bernstein_basis(m - 1, v, tl_basis_m1);

  double f = 0.0;
  for (std::size_t i = 0; i < raw.size(); ++i) f += tl_basis_m[i] * tl_derived[i];
  const double fp = weighted_deriv(tl_derived, tl_basis_m1);
  if (!(fp > 0.0)) {
    throw ad::EvalError("bp_raw_eval: non-positive derivative");
  }
  out.value = f;
  out.log_deriv = std::log(fp);

  // d theta_k / d raw_i = sigmoid(raw_i) for k >= i >= 1, and 1 for i = 0, so
  // parameter partials are suffix sums of the basis rows.
  out.d_value.resize(raw.size());
  out.d_log_deriv.resize(raw.size());
  double acc = 0.0;
  for (int i = m; i >= 1; --i) {
    acc += tl_basis_m[static_cast<std::size_t>(i)];
    out.d_value[static_cast<std::size_t>(i)] =
        num::sigmoid(raw[static_cast<std::size_t>(i)]) * acc;
  }
  out.d_value[0] = 1.0;

  acc = 0.0;
  for (int i = m; i >= 1; --i) {
    const double left = tl_basis_m1[static_cast<std::size_t>(i - 1)];
    const double right = i < m ? tl_basis_m1[static_cast<std::size_t>(i)] : 0.0;
    acc += static_cast<double>(m) * (left - right) / fp;
    out.d_log_deriv[static_cast<std::size_t>(i)] =
        num::sigmoid(raw[static_cast<std::size_t>(i)]) * acc;
  }
  // The i = 0 partial telescopes to zero: shifting all coefficients together
  // leaves the derivative unchanged.
  out.d_log_deriv[0] = 0.0;
}

BpTraced bp_eval_from_raw_traced(std::span<const ad::Var> raw, double v) {
  ad::Tape& t = *raw.front().tape;
  thread_local std::vector<double> raw_vals;
  thread_local BpRawEval eval;
  raw_vals.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) raw_vals[i] = raw[i].value();
  bp_raw_eval(raw_vals, v, eval);

  for (std::size_t i = 0; i < raw.size(); ++i) {
    t.push_parent(raw[i].id, eval.d_value[i]);
  }
  ad::Var value{&t, t.seal(ad::OpKind::custom, eval.value), eval.value};
  for (std::size_t i = 0; i < raw.size(); ++i) {
    t.push_parent(raw[i].id, eval.d_log_deriv[i]);
  }
  ad::Var log_deriv{&t, t.seal(ad::OpKind::custom, eval.log_deriv),
                    eval.log_deriv};
  return {value, log_deriv};
}

std::vector<ad::Var> reparam_traced(std::span<const ad::Var> raw) {
  for (const ad::Var& r : raw) {
    if (!std::isfinite(r.value())) {
      throw ad::EvalError("reparam_traced: non-finite coefficient");
    }
  }
  std::vector<ad::Var> out;
  out.reserve(raw.size());
  out.push_back(raw[0]);
  for (std::size_t i = 1; i < raw.size(); ++i) {
    ad::Var inc = ad::softplus(raw[i]);
    ad::Var next = out.back() + inc;
    if (!(next.value() > out.back().value())) {
      const double fixed = std::nextafter(out.back().value(),
                                          std::numeric_limits<double>::infinity());
      ad::Tape& t = *raw[0].tape;
      t.push_parent(out.back().id, 1.0);
      next = ad::Var{&t, t.seal(ad::OpKind::custom, fixed), fixed};
    }
    out.push_back(next);
  }
  return out;
}

}  // namespace bfvi
