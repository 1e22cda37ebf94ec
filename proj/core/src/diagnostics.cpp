#include "bfvi/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bfvi/math.hpp"
#include "bfvi/quadrature.hpp"

namespace bfvi {

PsisVerdict verdict_for(double k_hat) {
  if (k_hat < 0.5) return PsisVerdict::close;
  if (k_hat < 0.7) return PsisVerdict::useful;
  return PsisVerdict::poor;
}

const char* verdict_name(PsisVerdict v) {
  switch (v) {
    case PsisVerdict::close: return "close";
    case PsisVerdict::useful: return "useful";
    case PsisVerdict::poor: return "poor";
  }
  return "poor";
}

std::vector<double> importance_log_ratios(const SampleBank& bank,
                                          const ProbabilisticModel& model) {
  std::vector<double> out(bank.size());
  for (std::size_t s = 0; s < bank.size(); ++s) {
    const auto theta = bank.theta_row(s);
    out[s] = model.log_lik(theta, {}) + model.log_prior(theta) - bank.log_q[s];
  }
  return out;
}

GpdFit fit_gpd_tail(std::span<const double> ratios) {
  const int S = static_cast<int>(ratios.size());
  if (S < 100) {
    throw std::invalid_argument("fit_gpd_tail: need at least 100 ratios");
  }
  const int tail_count = std::min(
      static_cast<int>(std::ceil(0.2 * S)),
      static_cast<int>(std::ceil(3.0 * std::sqrt(static_cast<double>(S)))));

  std::vector<double> sorted(ratios.begin(), ratios.end());
  std::sort(sorted.begin(), sorted.end());
  const double threshold = sorted[static_cast<std::size_t>(S - tail_count - 1)];
  std::vector<double> x(static_cast<std::size_t>(tail_count));
  for (int i = 0; i < tail_count; ++i) {
    x[static_cast<std::size_t>(i)] =
        sorted[static_cast<std::size_t>(S - tail_count + i)] - threshold;
  }

  // The fit needs genuine tail variation.
  std::vector<double> distinct(x);
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  int positive_distinct = 0;
  for (double v : distinct) positive_distinct += v > 0.0 ? 1 : 0;
  if (positive_distinct < 5) {
    throw DegenerateTailError("fit_gpd_tail: fewer than 5 distinct tail values");
  }

  // Zhang & Stephens (2009) profile-likelihood grid.
  const int n = tail_count;
  const int grid = 30 + static_cast<int>(std::floor(std::sqrt(n)));
  const int quartile_idx =
      std::max(0, static_cast<int>(std::floor(n / 4.0 + 0.5)) - 1);
  double x_star = x[static_cast<std::size_t>(quartile_idx)];
  if (!(x_star > 0.0)) {
    for (double xi : x) {
      if (xi > 0.0) {
        x_star = xi;
        break;
      }
    }
  }
  const double x_max = x.back();

  std::vector<double> theta(static_cast<std::size_t>(grid));
  std::vector<double> prof(static_cast<std::size_t>(grid));
  for (int j = 0; j < grid; ++j) {
    theta[static_cast<std::size_t>(j)] =
        1.0 / x_max +
        (1.0 - std::sqrt(static_cast<double>(grid) / (j + 0.5))) /
            (3.0 * x_star);
  }
  auto mean_log1p = [&](double th) {
    double acc = 0.0;
    for (double xi : x) acc += std::log1p(-th * xi);
    return acc / static_cast<double>(n);
  };
  for (int j = 0; j < grid; ++j) {
    const double th = theta[static_cast<std::size_t>(j)];
    const double k = mean_log1p(th);
    prof[static_cast<std::size_t>(j)] =
        static_cast<double>(n) * (std::log(-th / k) - k - 1.0);
  }
  double theta_hat = 0.0;
  for (int j = 0; j < grid; ++j) {
    double denom = 0.0;
    for (int l = 0; l < grid; ++l) {
      denom += std::exp(prof[static_cast<std::size_t>(l)] -
                        prof[static_cast<std::size_t>(j)]);
    }
    theta_hat += theta[static_cast<std::size_t>(j)] / denom;
  }

  double k_hat = mean_log1p(theta_hat);
  const double sigma_hat = -k_hat / theta_hat;
  // Weakly informative shrinkage towards 0.5 (pseudo-count 10).
  k_hat = (k_hat * n + 5.0) / (n + 10.0);
  if (std::isnan(k_hat)) k_hat = std::numeric_limits<double>::infinity();

  return {k_hat, sigma_hat, tail_count};
}

PsisReport psis_khat_from_log_ratios(std::span<const double> log_ratios) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double lr : log_ratios) mx = std::max(mx, lr);
  std::vector<double> r(log_ratios.size());
  for (std::size_t i = 0; i < r.size(); ++i) r[i] = std::exp(log_ratios[i] - mx);

  PsisReport report;
  report.sample_count = static_cast<int>(r.size());
  try {
    const GpdFit fit = fit_gpd_tail(r);
    report.tail_count = fit.tail_count;
    report.k_hat = fit.k_hat;
  } catch (const DegenerateTailError&) {
    // A constant-ratio bank means q matches the joint up to a constant; that
    // is a perfect approximation, not a heavy tail.
    report.tail_count = 0;
    report.k_hat = -std::numeric_limits<double>::infinity();
    report.verdict = PsisVerdict::close;
    return report;
  }
  if (!std::isfinite(report.k_hat) || report.k_hat > 10.0) {
    report.k_hat = std::numeric_limits<double>::infinity();
    report.verdict = PsisVerdict::poor;
    return report;
  }
  report.verdict = verdict_for(report.k_hat);
  return report;
}

PsisReport psis_khat(const VariationalFamily& family,
                     const ProbabilisticModel& model, int s_diag, Rng& rng) {
  const SampleBank bank = sample_posterior(family, s_diag, rng);
  const std::vector<double> lr = importance_log_ratios(bank, model);
  return psis_khat_from_log_ratios(lr);
}

double kl_vs_analytic(const VariationalFamily& family,
                      const std::function<double(std::span<const double>)>&
                          analytic_log_pdf,
                      int S, Rng& rng, double* se_out) {
  const SampleBank bank = sample_posterior(family, S, rng);
  double acc = 0.0, acc2 = 0.0;
  for (std::size_t s = 0; s < bank.size(); ++s) {
    const double term = bank.log_q[s] - analytic_log_pdf(bank.theta_row(s));
    acc += term;
    acc2 += term * term;
  }
  const double n = static_cast<double>(S);
  const double mean = acc / n;
  if (se_out) *se_out = std::sqrt((acc2 / n - mean * mean) / n);
  return mean;
}

double kl_via_evidence(const VariationalFamily& family,
                       const ProbabilisticModel& model, double log_evidence,
                       int S, Rng& rng, double* se_out) {
  const SampleBank bank = sample_posterior(family, S, rng);
  double acc = 0.0, acc2 = 0.0;
  for (std::size_t s = 0; s < bank.size(); ++s) {
    const auto theta = bank.theta_row(s);
    const double term =
        bank.log_q[s] - model.log_lik(theta, {}) - model.log_prior(theta);
    acc += term;
    acc2 += term * term;
  }
  const double n = static_cast<double>(S);
  const double mean = acc / n;
  if (se_out) *se_out = std::sqrt((acc2 / n - mean * mean) / n);
  return mean + log_evidence;
}

double log_evidence_quadrature_1d(const ProbabilisticModel& model, double lo,
                                  double hi, int nodes) {
  if (model.dim != 1) {
    throw std::invalid_argument("log_evidence_quadrature_1d: model.dim != 1");
  }
  auto log_joint = [&](double th) {
    const double v[1] = {th};
    return model.log_lik(std::span<const double>(v, 1), {}) +
           model.log_prior(std::span<const double>(v, 1));
  };
  const double log_z = integrate_log(log_joint, lo, hi, nodes);

  // Mass outside [lo, hi], bounded by exponential extrapolation of the
  // integrand decay at each endpoint.
  const double delta = 1e-3 * (hi - lo);
  const double rate_lo = (log_joint(lo + delta) - log_joint(lo)) / delta;
  const double rate_hi = (log_joint(hi - delta) - log_joint(hi)) / delta;
  double outside = 0.0;
  if (rate_lo <= 0.0 || rate_hi <= 0.0) {
    outside = std::numeric_limits<double>::infinity();
  } else {
    outside = std::exp(log_joint(lo) - log_z) / rate_lo +
              std::exp(log_joint(hi) - log_z) / rate_hi;
  }
  if (!(outside <= 1e-10)) {
    throw IntervalError(
        "log_evidence_quadrature_1d: [lo,hi] does not cover the posterior "
        "mass (outside bound " +
        std::to_string(outside) + ")");
  }
  return log_z;
}

std::vector<double> kde_gaussian(std::span<const double> samples,
                                 std::span<const double> grid,
                                 double bandwidth) {
  std::vector<double> out(grid.size(), 0.0);
  const double norm =
      1.0 / (static_cast<double>(samples.size()) * bandwidth *
             std::sqrt(2.0 * num::pi));
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double acc = 0.0;
    for (double x : samples) {
      const double u = (grid[g] - x) / bandwidth;
      acc += std::exp(-0.5 * u * u);
    }
    out[g] = acc * norm;
  }
  return out;
}

std::vector<std::size_t> local_maxima(std::span<const double> density,
                                      double floor_frac) {
  std::vector<std::size_t> out;
  double mx = 0.0;
  for (double d : density) mx = std::max(mx, d);
  const double floor = floor_frac * mx;
  for (std::size_t i = 1; i + 1 < density.size(); ++i) {
    if (density[i] > density[i - 1] && density[i] > density[i + 1] &&
        density[i] > floor) {
      out.push_back(i);
    }
  }
  return out;
}

std::vector<std::size_t> prominent_maxima(std::span<const double> density,
                                          double min_prominence_frac) {
  const std::vector<std::size_t> peaks = local_maxima(density);
  double mx = 0.0;
  for (double d : density) mx = std::max(mx, d);
  const double min_prom = min_prominence_frac * mx;

  std::vector<std::size_t> out;
  for (std::size_t p : peaks) {
    const double h = density[p];
    // Lowest point between the peak and the nearest higher ground, per side;
    // the boundary counts as higher ground being absent.
    double left_base = h;
    for (std::size_t i = p; i-- > 0;) {
      left_base = std::min(left_base, density[i]);
      if (density[i] > h) break;
    }
    double right_base = h;
    for (std::size_t i = p + 1; i < density.size(); ++i) {
      right_base = std::min(right_base, density[i]);
      if (density[i] > h) break;
    }
    const double prominence = h - std::max(left_base, right_base);
    if (prominence >= min_prom) out.push_back(p);
  }
  return out;
}

}  // namespace bfvi
