#include "bfvi/vi.hpp"
#include <algorithm>

#include <chrono>
#include <cmath>

#include "bfvi/math.hpp"

namespace bfvi {

// --- mean-field Gaussian ------------------------------------------------------

MeanFieldGaussian::MeanFieldGaussian(int dim) : dim_(dim) {
  params_.add_slice("mean", static_cast<std::size_t>(dim), 0.0);
  params_.add_slice("log_sd", static_cast<std::size_t>(dim), 0.0);
}

void MeanFieldGaussian::transform(std::span<const double> z,
                                  std::span<double> theta,
                                  double& log_q) const {
  auto m = params_.slice("mean");
  auto r = params_.slice("log_sd");
  log_q = 0.0;
  for (int j = 0; j < dim_; ++j) {
    const auto ju = static_cast<std::size_t>(j);
    theta[ju] = m[ju] + std::exp(r[ju]) * z[ju];
    log_q += -0.5 * num::log_two_pi - r[ju] - 0.5 * z[ju] * z[ju];
  }
}

MeanFieldGaussian::Traced MeanFieldGaussian::transform_traced(
    std::span<const ad::Var> lambda, std::span<const double> z) const {
  const std::size_t m_off = params_.offset_of("mean");
  const std::size_t r_off = params_.offset_of("log_sd");
  Traced out;
  out.theta.reserve(static_cast<std::size_t>(dim_));
  double const_part = 0.0;
  ad::Var r_sum;
  for (int j = 0; j < dim_; ++j) {
    const auto ju = static_cast<std::size_t>(j);
    const ad::Var m = lambda[m_off + ju];
    const ad::Var r = lambda[r_off + ju];
    out.theta.push_back(m + ad::exp(r) * z[ju]);
    const_part += -0.5 * num::log_two_pi - 0.5 * z[ju] * z[ju];
    r_sum = j == 0 ? r : r_sum + r;
  }
  out.log_q = const_part - r_sum;
  return out;
}

// --- variational family -------------------------------------------------------

FamilyKind family_kind_from_name(std::string_view name) {
  if (name == "bfvi") return FamilyKind::bernstein_flow;
  if (name == "mfgauss") return FamilyKind::mean_field_gaussian;
  throw std::invalid_argument("unknown method '" + std::string(name) +
                              "', expected bfvi|mfgauss");
}

VariationalFamily VariationalFamily::bernstein_1d(int order) {
  VariationalFamily f;
  Flow1D state;
  state.order = order;
  const SandwichFlow init = SandwichFlow::ramp_init(order);
  const std::vector<double> lambda = init.params();
  state.params.add_slice("affine", 4);
  state.params.add_slice("coeffs", lambda.size() - 4);
  std::copy(lambda.begin(), lambda.end(), state.params.flat().begin());
  f.impl_ = std::move(state);
  return f;
}

VariationalFamily VariationalFamily::bernstein_mv(int dim, int order,
                                                  std::uint64_t init_seed) {
  VariationalFamily f;
  MultivariateBernsteinFlow flow(dim, order);
  flow.init_ramp(init_seed);
  f.impl_ = std::move(flow);
  return f;
}

VariationalFamily VariationalFamily::mean_field(int dim) {
  VariationalFamily f;
  f.impl_ = MeanFieldGaussian(dim);
  return f;
}

VariationalFamily mean_field_gaussian_family(int dim) {
  return VariationalFamily::mean_field(dim);
}

int VariationalFamily::dim() const {
  if (std::holds_alternative<Flow1D>(impl_)) return 1;
  if (const auto* mv = std::get_if<MultivariateBernsteinFlow>(&impl_)) {
    return mv->dim();
  }
  return std::get<MeanFieldGaussian>(impl_).dim();
}

std::string VariationalFamily::kind_name() const {
  if (std::holds_alternative<MeanFieldGaussian>(impl_)) return "mfgauss";
  return "bfvi";
}

ad::ParamVector& VariationalFamily::params() {
  if (auto* f = std::get_if<Flow1D>(&impl_)) return f->params;
  if (auto* mv = std::get_if<MultivariateBernsteinFlow>(&impl_)) {
    return mv->params();
  }
  return std::get<MeanFieldGaussian>(impl_).params();
}

const ad::ParamVector& VariationalFamily::params() const {
  return const_cast<VariationalFamily*>(this)->params();
}

SandwichFlow VariationalFamily::sandwich() const {
  const auto& f = std::get<Flow1D>(impl_);
  return SandwichFlow::from_params(f.params.flat(), f.order);
}

const MultivariateBernsteinFlow& VariationalFamily::maf() const {
  return std::get<MultivariateBernsteinFlow>(impl_);
}

const MeanFieldGaussian& VariationalFamily::mean_field_gaussian() const {
  return std::get<MeanFieldGaussian>(impl_);
}

void VariationalFamily::transform(std::span<const double> z,
                                  std::span<double> theta,
                                  double& log_q) const {
  if (const auto* f = std::get_if<Flow1D>(&impl_)) {
    const SandwichFlow flow = SandwichFlow::from_params(f->params.flat(), f->order);
    const FlowOutput out = flow.forward(z[0]);
    theta[0] = out.theta;
    log_q = num::std_normal_lpdf(z[0]) - out.log_det;
    return;
  }
  if (const auto* mv = std::get_if<MultivariateBernsteinFlow>(&impl_)) {
    const MvOutput out = mv->forward(z);
    for (std::size_t j = 0; j < out.theta.size(); ++j) theta[j] = out.theta[j];
    double acc = 0.0;
    for (double zj : z) acc += num::std_normal_lpdf(zj);
    log_q = acc - out.log_det;
    return;
  }
  std::get<MeanFieldGaussian>(impl_).transform(z, theta, log_q);
}

VariationalFamily::Prestep VariationalFamily::prestep_traced(
    std::span<const ad::Var> lambda) const {
  Prestep pre;
  if (const auto* f = std::get_if<Flow1D>(&impl_)) {
    const std::size_t off = f->params.offset_of("coeffs");
    pre.derived = reparam_traced(lambda.subspan(off));
  }
  return pre;
}

VariationalFamily::Traced VariationalFamily::transform_traced(
    std::span<const ad::Var> lambda, const Prestep& pre,
    std::span<const double> z) const {
  Traced out;
  if (std::holds_alternative<Flow1D>(impl_)) {
    const SandwichFlow::Traced st =
        SandwichFlow::forward_traced(lambda.first(4), pre.derived, z[0]);
    out.theta = {st.theta};
    out.log_q = num::std_normal_lpdf(z[0]) - st.log_det;
    return out;
  }
  if (const auto* mv = std::get_if<MultivariateBernsteinFlow>(&impl_)) {
    MultivariateBernsteinFlow::Traced t = mv->forward_traced(lambda, z);
    out.theta = std::move(t.theta);
    double acc = 0.0;
    for (double zj : z) acc += num::std_normal_lpdf(zj);
    out.log_q = acc - t.log_det;
    return out;
  }
  const MeanFieldGaussian::Traced t =
      std::get<MeanFieldGaussian>(impl_).transform_traced(lambda, z);
  out.theta = std::move(t.theta);
  out.log_q = t.log_q;
  return out;
}

// --- ELBO estimation ----------------------------------------------------------

std::vector<double> draw_base(int dim, int S, Rng& rng) {
  std::vector<double> z(static_cast<std::size_t>(dim) * static_cast<std::size_t>(S));
  for (double& v : z) v = rng.normal();
  return z;
}

ElboEstimate estimate_elbo_fixed(const VariationalFamily& family,
                                 const ProbabilisticModel& model,
                                 std::span<const double> z_bank) {
  const int p = family.dim();
  const std::size_t S = z_bank.size() / static_cast<std::size_t>(p);
  std::vector<double> theta(static_cast<std::size_t>(p));
  double sum_ll = 0.0, sum_kl = 0.0;
  for (std::size_t s = 0; s < S; ++s) {
    double log_q = 0.0;
    family.transform(z_bank.subspan(s * static_cast<std::size_t>(p),
                                    static_cast<std::size_t>(p)),
                     theta, log_q);
    const double ll = model.log_lik(theta, {});
    const double lp = model.log_prior(theta);
    const double term = ll + lp - log_q;
    if (!std::isfinite(term)) {
      throw TrainingError(static_cast<int>(s),
                          "estimate_elbo: non-finite term at sample " +
                              std::to_string(s));
    }
    sum_ll += ll;
    sum_kl += log_q - lp;
  }
  const double inv = 1.0 / static_cast<double>(S);
  return {sum_ll * inv - sum_kl * inv, sum_ll * inv, sum_kl * inv};
}

ElboEstimate estimate_elbo(const VariationalFamily& family,
                           const ProbabilisticModel& model, int S, Rng& rng) {
  const std::vector<double> z = draw_base(family.dim(), S, rng);
  return estimate_elbo_fixed(family, model, z);
}

ad::Var elbo_objective_traced(ad::Tape& tape, std::span<const ad::Var> leaves,
                              const VariationalFamily& family,
                              const ProbabilisticModel& model,
                              std::span<const double> z_bank, RowSubset rows,
                              double lik_scale) {
  const int p = family.dim();
  const std::size_t S = z_bank.size() / static_cast<std::size_t>(p);
  const VariationalFamily::Prestep pre = family.prestep_traced(leaves);
  ad::Var obj;
  for (std::size_t s = 0; s < S; ++s) {
    VariationalFamily::Traced t = family.transform_traced(
        leaves, pre,
        z_bank.subspan(s * static_cast<std::size_t>(p),
                       static_cast<std::size_t>(p)));
    ad::Var ll = model.log_lik_traced(t.theta, rows);
    ad::Var lp = model.log_prior_traced(t.theta);
    ad::Var term = ll * lik_scale + lp - t.log_q;
    obj = s == 0 ? term : obj + term;
  }
  (void)tape;
  return obj * (1.0 / static_cast<double>(S));
}

// --- training loop -------------------------------------------------------------

FitResult train(const ProbabilisticModel& model, FamilyKind kind,
                const TrainConfig& config) {
  const auto t0 = std::chrono::steady_clock::now();
  const int p = model.dim;

  VariationalFamily family =
      kind == FamilyKind::mean_field_gaussian
          ? VariationalFamily::mean_field(p)
          : (p == 1 ? VariationalFamily::bernstein_1d(config.order)
                    : VariationalFamily::bernstein_mv(p, config.order,
                                                      config.seed ^ 0x9e3779b97f4a7c15ULL));

  std::vector<double>& lambda = family.params().flat();
  const std::size_t n_par = lambda.size();
  std::vector<double> acc(n_par, 0.0);

  const std::size_t n_rows = model.data ? model.data->rows() : 0;
  const bool minibatch = config.batch_size > 0 &&
                         static_cast<std::size_t>(config.batch_size) < n_rows;
  const double lik_scale =
      minibatch ? static_cast<double>(n_rows) / config.batch_size : 1.0;
  std::vector<std::int32_t> rows;

  Rng rng(config.seed);
  ad::Tape tape;
  FitResult result;
  result.seed = config.seed;
  result.elbo_trace.reserve(static_cast<std::size_t>(config.epochs));

  constexpr double kClipNorm = 100.0;

  for (int step = 0; step < config.epochs; ++step) {
    const std::vector<double> z = draw_base(p, config.mc_samples, rng);
    if (minibatch) {
      rows.resize(static_cast<std::size_t>(config.batch_size));
      for (auto& r : rows) {
        r = static_cast<std::int32_t>(rng.below(n_rows));
      }
    }

    tape.clear();
    std::vector<ad::Var> leaves = family.params().bind(tape);
    ad::Var obj;
    try {
      obj = elbo_objective_traced(tape, leaves, family, model, z, rows,
                                  lik_scale);
    } catch (const ad::EvalError& e) {
      throw TrainingError(step, std::string("train: ") + e.what() +
                                    " at step " + std::to_string(step));
    }
    if (!std::isfinite(obj.value())) {
      throw TrainingError(step, "train: non-finite ELBO estimate at step " +
                                    std::to_string(step));
    }
    std::vector<double> g = ad::grad(tape, obj, leaves);
    double norm2 = 0.0;
    for (double gi : g) norm2 += gi * gi;
    if (!std::isfinite(norm2)) {
      throw TrainingError(step, "train: non-finite gradient at step " +
                                    std::to_string(step));
    }
    if (norm2 > kClipNorm * kClipNorm) {
      const double scale = kClipNorm / std::sqrt(norm2);
      for (double& gi : g) gi *= scale;
      result.clipped_steps.push_back(step);
    }
    // RMSprop ascent on the ELBO.
    for (std::size_t i = 0; i < n_par; ++i) {
      acc[i] = config.rms_decay * acc[i] + (1.0 - config.rms_decay) * g[i] * g[i];
      lambda[i] += config.lr * g[i] / std::sqrt(acc[i] + config.rms_eps);
    }
    result.elbo_trace.push_back(obj.value());
  }

  result.family = std::move(family);
  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

// --- posterior sampling ---------------------------------------------------------

SampleBank sample_posterior(const VariationalFamily& family, int n, Rng& rng) {
  const int p = family.dim();
  SampleBank bank;
  bank.dim = p;
  bank.z = draw_base(p, n, rng);
  bank.theta.resize(bank.z.size());
  bank.log_q.resize(static_cast<std::size_t>(n));
  std::vector<double> theta(static_cast<std::size_t>(p));
  for (int s = 0; s < n; ++s) {
    const auto su = static_cast<std::size_t>(s);
    double lq = 0.0;
    family.transform(bank.z_row(su),
                     std::span<double>(bank.theta.data() +
                                           su * static_cast<std::size_t>(p),
                                       static_cast<std::size_t>(p)),
                     lq);
    bank.log_q[su] = lq;
  }
  (void)theta;
  return bank;
}

// --- trace utilities -------------------------------------------------------------

bool smoothed_trace_nondecreasing(std::span<const double> trace, int window,
                                  double frac, double z_tol) {
  const std::size_t n = trace.size();
  const std::size_t start = static_cast<std::size_t>(
      static_cast<double>(n) * (1.0 - frac));
  const std::size_t len = n - start;
  const std::size_t w = static_cast<std::size_t>(window);
  const std::size_t n_windows = len / w;
  if (n_windows < 2) return true;
  std::vector<double> means(n_windows), sds(n_windows);
  for (std::size_t k = 0; k < n_windows; ++k) {
    std::span<const double> win = trace.subspan(start + k * w, w);
    means[k] = num::mean(win);
    sds[k] = num::sd(win);
  }
  for (std::size_t k = 0; k + 1 < n_windows; ++k) {
    const double se = std::sqrt((sds[k] * sds[k] + sds[k + 1] * sds[k + 1]) /
                                static_cast<double>(w));
    if (means[k + 1] < means[k] - z_tol * se) return false;
  }
  return true;
}

}  // namespace bfvi
