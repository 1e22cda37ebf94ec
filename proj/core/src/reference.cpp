#include "bfvi/reference.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "bfvi/math.hpp"
#include "bfvi/quadrature.hpp"
#include "bfvi/vi.hpp"

namespace bfvi {

namespace {

// Regularized incomplete beta by continued fraction (Lentz's method).
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16;
  constexpr double kFpMin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::abs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

double inc_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front = a * std::log(x) + b * std::log1p(-x) -
                          num::log_beta_fn(a, b);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return std::exp(ln_front) * betacf(a, b, x) / a;
  }
  return 1.0 - std::exp(b * std::log1p(-x) + a * std::log(x) -
                        num::log_beta_fn(b, a)) *
                   betacf(b, a, 1.0 - x) / b;
}

// Marsaglia-Tsang gamma sampler (shape >= 0 handled via the boost trick).
double sample_gamma(double shape, Rng& rng) {
  if (shape < 1.0) {
    const double u = rng.uniform01();
    return sample_gamma(shape + 1.0, rng) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x, v;
    do {
      x = rng.normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = rng.uniform01();
    if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
    if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
  }
}

}  // namespace

BetaDistribution::BetaDistribution(double alpha, double beta)
    : alpha_(alpha), beta_(beta) {
  if (!(alpha > 0.0) || !(beta > 0.0)) {
    throw std::invalid_argument("BetaDistribution: parameters must be > 0");
  }
}

double BetaDistribution::pdf(double x) const { return std::exp(log_pdf(x)); }

double BetaDistribution::log_pdf(double x) const {
  return num::beta_lpdf(x, alpha_, beta_);
}

double BetaDistribution::cdf(double x) const { return inc_beta(alpha_, beta_, x); }

double BetaDistribution::sample(Rng& rng) const {
  const double g1 = sample_gamma(alpha_, rng);
  const double g2 = sample_gamma(beta_, rng);
  return g1 / (g1 + g2);
}

double BetaDistribution::log_pdf_unconstrained(double theta) const {
  const double p = num::sigmoid(theta);
  const double log_jac = -num::softplus(theta) - num::softplus(-theta);
  return num::beta_lpdf(p, alpha_, beta_) + log_jac;
}

BetaDistribution analytic_beta_posterior(double alpha0, double beta0,
                                         std::span<const double> y) {
  double sum = 0.0;
  for (double v : y) {
    if (v != 0.0 && v != 1.0) {
      throw DataError("analytic_beta_posterior: y must be binary");
    }
    sum += v;
  }
  const double n = static_cast<double>(y.size());
  return BetaDistribution(alpha0 + sum, beta0 + n - sum);
}

double GridPosterior::density_at(double x) const {
  if (x <= grid.front() || x >= grid.back()) return 0.0;
  const double step = grid[1] - grid[0];
  const std::size_t i = static_cast<std::size_t>((x - grid.front()) / step);
  const double frac = (x - grid[i]) / step;
  return density[i] * (1.0 - frac) + density[i + 1] * frac;
}

double GridPosterior::cdf_at(double x) const {
  if (x <= grid.front()) return 0.0;
  if (x >= grid.back()) return 1.0;
  const double step = grid[1] - grid[0];
  const std::size_t i = static_cast<std::size_t>((x - grid.front()) / step);
  const double frac = (x - grid[i]) / step;
  return cdf[i] * (1.0 - frac) + cdf[i + 1] * frac;
}

GridPosterior grid_posterior_1d(const ProbabilisticModel& model, double lo,
                                double hi, int nodes) {
  if (model.dim != 1) {
    throw std::invalid_argument("grid_posterior_1d: model.dim != 1");
  }
  GridPosterior post;
  post.grid.resize(static_cast<std::size_t>(nodes));
  std::vector<double> log_dens(static_cast<std::size_t>(nodes));
  const double step = (hi - lo) / static_cast<double>(nodes - 1);
  for (int i = 0; i < nodes; ++i) {
    const double th = lo + step * i;
    post.grid[static_cast<std::size_t>(i)] = th;
    const double v[1] = {th};
    log_dens[static_cast<std::size_t>(i)] =
        model.log_lik(std::span<const double>(v, 1), {}) +
        model.log_prior(std::span<const double>(v, 1));
  }
  // Normalize by trapezoid evidence in log space.
  std::vector<double> terms;
  terms.reserve(static_cast<std::size_t>(nodes));
  for (int i = 0; i < nodes; ++i) {
    const double w = (i == 0 || i == nodes - 1) ? 0.5 * step : step;
    terms.push_back(std::log(w) + log_dens[static_cast<std::size_t>(i)]);
  }
  post.log_evidence = num::log_sum_exp(terms);
  post.density.resize(static_cast<std::size_t>(nodes));
  for (int i = 0; i < nodes; ++i) {
    post.density[static_cast<std::size_t>(i)] =
        std::exp(log_dens[static_cast<std::size_t>(i)] - post.log_evidence);
  }
  post.cdf.resize(static_cast<std::size_t>(nodes));
  post.cdf[0] = 0.0;
  for (int i = 1; i < nodes; ++i) {
    const auto iu = static_cast<std::size_t>(i);
    post.cdf[iu] = post.cdf[iu - 1] +
                   0.5 * step * (post.density[iu - 1] + post.density[iu]);
  }
  const double total = post.cdf.back();
  for (double& c : post.cdf) c /= total;
  for (std::size_t i = 1; i + 1 < post.density.size(); ++i) {
    if (post.density[i] > post.density[i - 1] &&
        post.density[i] > post.density[i + 1]) {
      post.modes.push_back(post.grid[i]);
    }
  }
  return post;
}

std::vector<double> McmcChain::column(int j) const {
  std::vector<double> out(static_cast<std::size_t>(n_kept));
  for (int i = 0; i < n_kept; ++i) {
    out[static_cast<std::size_t>(i)] =
        draws[static_cast<std::size_t>(i) * static_cast<std::size_t>(dim) +
              static_cast<std::size_t>(j)];
  }
  return out;
}

McmcChain rwm_sample(const ProbabilisticModel& model, int n_warmup, int n_kept,
                     int thinning, std::uint64_t seed) {
  const int p = model.dim;
  if (p > 64) throw std::invalid_argument("rwm_sample: dim > 64");
  Rng rng(seed);

  std::vector<double> x(static_cast<std::size_t>(p), 0.0);
  double lj = model.log_joint(x);
  for (int attempt = 0; attempt < 10 && !std::isfinite(lj); ++attempt) {
    for (double& v : x) v = rng.normal();
    lj = model.log_joint(x);
  }
  if (!std::isfinite(lj)) {
    throw TrainingError(0, "rwm_sample: no finite initial state");
  }

  const double target = p == 1 ? 0.44 : 0.234;
  double log_global = std::log(2.38 / std::sqrt(static_cast<double>(p)));
  std::vector<double> coord_sd(static_cast<std::size_t>(p), 1.0);

  // Welford accumulators for the warmup variance.
  std::vector<double> mean(static_cast<std::size_t>(p), 0.0);
  std::vector<double> m2(static_cast<std::size_t>(p), 0.0);
  std::int64_t n_acc = 0;

  std::vector<double> prop(static_cast<std::size_t>(p));
  McmcChain chain;
  chain.dim = p;
  chain.n_warmup = n_warmup;
  chain.n_kept = n_kept;
  chain.thinning = thinning;
  chain.seed = seed;
  chain.draws.reserve(static_cast<std::size_t>(n_kept) * static_cast<std::size_t>(p));
  chain.log_joint.reserve(static_cast<std::size_t>(n_kept));

  std::int64_t accepted = 0, total = 0;
  const std::int64_t total_iters =
      static_cast<std::int64_t>(n_warmup) +
      static_cast<std::int64_t>(n_kept) * static_cast<std::int64_t>(thinning);
  for (std::int64_t it = 0; it < total_iters; ++it) {
    const bool warm = it < n_warmup;
    const double g = std::exp(log_global);
    for (int j = 0; j < p; ++j) {
      const auto ju = static_cast<std::size_t>(j);
      prop[ju] = x[ju] + g * coord_sd[ju] * rng.normal();
    }
    const double lj_prop = model.log_joint(prop);
    const double log_u = std::log(rng.uniform01());
    const bool accept = std::isfinite(lj_prop) && log_u < lj_prop - lj;
    if (accept) {
      x = prop;
      lj = lj_prop;
    }
    if (!warm) {
      ++total;
      accepted += accept ? 1 : 0;
      if ((it - n_warmup + 1) % thinning == 0) {
        chain.draws.insert(chain.draws.end(), x.begin(), x.end());
        chain.log_joint.push_back(lj);
      }
    } else {
      // Robbins-Monro on the global scale towards the target acceptance.
      const double eta =
          0.3 / std::pow(static_cast<double>(it) + 10.0, 0.6);
      log_global += eta * ((accept ? 1.0 : 0.0) - target);
      ++n_acc;
      for (int j = 0; j < p; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        const double d = x[ju] - mean[ju];
        mean[ju] += d / static_cast<double>(n_acc);
        m2[ju] += d * (x[ju] - mean[ju]);
      }
      // Refresh per-coordinate scales periodically once variance estimates
      // have some support.
      if (n_acc >= 500 && it % 200 == 0) {
        for (int j = 0; j < p; ++j) {
          const auto ju = static_cast<std::size_t>(j);
          const double var = m2[ju] / static_cast<double>(n_acc - 1);
          coord_sd[ju] = std::max(1e-3, std::sqrt(var));
        }
      }
    }
  }
  chain.acceptance_rate =
      total > 0 ? static_cast<double>(accepted) / static_cast<double>(total) : 0.0;
  return chain;
}

namespace {

// Split-Rhat and ESS over sequences of equal length (BDA3 recipe).
void rhat_ess_for_sequences(const std::vector<std::vector<double>>& seqs,
                            double& rhat, double& ess) {
  const std::size_t m = seqs.size();
  const std::size_t n = seqs.front().size();
  std::vector<double> means(m), vars(m);
  double grand = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    means[j] = num::mean(seqs[j]);
    vars[j] = num::variance(seqs[j]);
    grand += means[j];
  }
  grand /= static_cast<double>(m);
  double b = 0.0, w = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    b += (means[j] - grand) * (means[j] - grand);
    w += vars[j];
  }
  b *= static_cast<double>(n) / static_cast<double>(m - 1);
  w /= static_cast<double>(m);
  const double nd = static_cast<double>(n);
  const double var_plus = (nd - 1.0) / nd * w + b / nd;
  rhat = std::sqrt(var_plus / w);

  // Combined autocorrelation, truncated at the first non-positive Geyer pair.
  auto rho_at = [&](std::size_t t) {
    double acov = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const auto& s = seqs[j];
      double acc = 0.0;
      for (std::size_t i = 0; i + t < n; ++i) {
        acc += (s[i] - means[j]) * (s[i + t] - means[j]);
      }
      acov += acc / nd;
    }
    acov /= static_cast<double>(m);
    return 1.0 - (w - acov) / var_plus;
  };
  double tau = 1.0;
  const std::size_t max_lag = std::min<std::size_t>(n - 1, 2000);
  for (std::size_t t = 1; t + 1 <= max_lag; t += 2) {
    const double pair = rho_at(t) + rho_at(t + 1);
    if (pair <= 0.0) break;
    tau += 2.0 * pair;
  }
  ess = static_cast<double>(m) * nd / tau;
}

}  // namespace

ChainDiagnostics chain_diagnostics(std::span<const McmcChain> chains) {
  if (chains.size() < 2) {
    throw std::invalid_argument("chain_diagnostics: need >= 2 chains");
  }
  const int dim = chains.front().dim;
  std::vector<std::vector<std::vector<double>>> quantities(
      static_cast<std::size_t>(dim));
  for (int j = 0; j < dim; ++j) {
    for (const McmcChain& c : chains) {
      quantities[static_cast<std::size_t>(j)].push_back(c.column(j));
    }
  }
  return chain_diagnostics_scalar(quantities);
}

ChainDiagnostics chain_diagnostics_scalar(
    const std::vector<std::vector<std::vector<double>>>& per_chain_quantities) {
  ChainDiagnostics diag;
  for (const auto& chains : per_chain_quantities) {
    // Split each chain in half.
    std::vector<std::vector<double>> seqs;
    const std::size_t n2 = chains.front().size() / 2;
    for (const auto& c : chains) {
      seqs.emplace_back(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(n2));
      seqs.emplace_back(c.begin() + static_cast<std::ptrdiff_t>(n2),
                        c.begin() + static_cast<std::ptrdiff_t>(2 * n2));
    }
    double rhat = 0.0, ess = 0.0;
    rhat_ess_for_sequences(seqs, rhat, ess);
    diag.split_rhat.push_back(rhat);
    diag.ess.push_back(ess);
    diag.max_rhat = std::max(diag.max_rhat, rhat);
  }
  return diag;
}

}  // namespace bfvi
