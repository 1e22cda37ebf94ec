#pragma once

// Posterior-quality measurement: importance ratios against the joint density,
// a generalized-Pareto fit to the ratio tail (the k-hat diagnostic),
// sample-based KL estimators, and the 1D evidence quadrature they rely on.

#include <functional>
#include <span>
#include <stdexcept>
#include <vector>

#include "bfvi/models.hpp"
#include "bfvi/rng.hpp"
#include "bfvi/vi.hpp"

namespace bfvi {

struct DegenerateTailError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IntervalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class PsisVerdict { close, useful, poor };

// k-hat bands partition the line at 0.5 and 0.7, left-closed.
PsisVerdict verdict_for(double k_hat);
const char* verdict_name(PsisVerdict v);

struct PsisReport {
  double k_hat = 0.0;
  int tail_count = 0;
  int sample_count = 0;
  PsisVerdict verdict = PsisVerdict::poor;
};

// log r_s = log p(D | theta_s) + log p(theta_s) - log q(theta_s), kept in log
// space to avoid overflow.
std::vector<double> importance_log_ratios(const SampleBank& bank,
                                          const ProbabilisticModel& model);

struct GpdFit {
  double k_hat = 0.0;
  double sigma_hat = 0.0;
  int tail_count = 0;
};

// Fits a generalized Pareto distribution to the exceedances of `ratios` over
// the (S - tail_count)-th order statistic, tail_count = min(ceil(0.2 S),
// ceil(3 sqrt(S))), by the Zhang-Stephens profile-likelihood grid with the
// usual weak-prior shrinkage of k-hat. Requires S >= 100; throws
// DegenerateTailError when the tail has fewer than 5 distinct values.
GpdFit fit_gpd_tail(std::span<const double> ratios);

PsisReport psis_khat(const VariationalFamily& family,
                     const ProbabilisticModel& model, int s_diag, Rng& rng);
PsisReport psis_khat_from_log_ratios(std::span<const double> log_ratios);

// (1/S) sum [log q(theta_s) - log p(theta_s)] for theta_s ~ q, against a
// closed-form log-density over the unconstrained axis. `se_out`, when
// non-null, receives the Monte-Carlo standard error.
double kl_vs_analytic(const VariationalFamily& family,
                      const std::function<double(std::span<const double>)>&
                          analytic_log_pdf,
                      int S, Rng& rng, double* se_out = nullptr);

// Same estimator with the posterior expanded as likelihood x prior / Z.
double kl_via_evidence(const VariationalFamily& family,
                       const ProbabilisticModel& model, double log_evidence,
                       int S, Rng& rng, double* se_out = nullptr);

// log of the integral of exp(log_lik + log_prior) over [lo, hi] for a
// one-dimensional model, by Gauss-Legendre accumulation in log space. Throws
// IntervalError when the exponential-extrapolation bound on the mass outside
// [lo, hi] exceeds 1e-10.
double log_evidence_quadrature_1d(const ProbabilisticModel& model, double lo,
                                  double hi, int nodes);

// Gaussian kernel density estimate evaluated on a grid.
std::vector<double> kde_gaussian(std::span<const double> samples,
                                 std::span<const double> grid,
                                 double bandwidth);

// Indices of strict local maxima of a density table.
std::vector<std::size_t> local_maxima(std::span<const double> density,
                                      double floor_frac = 0.0);

// Local maxima whose topographic prominence is at least
// `min_prominence_frac` of the global maximum; separates genuine density
// modes from sampling wiggles on flat stretches of a KDE.
std::vector<std::size_t> prominent_maxima(std::span<const double> density,
                                          double min_prominence_frac);

}  // namespace bfvi
