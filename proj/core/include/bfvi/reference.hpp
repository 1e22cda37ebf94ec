#pragma once

// Ground-truth posterior machinery: the conjugate Beta posterior, dense-grid
// quadrature posteriors for one-dimensional models, an adaptive random-walk
// Metropolis sampler, and split-Rhat / ESS chain diagnostics that gate any
// chain used as a reference.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "bfvi/models.hpp"
#include "bfvi/rng.hpp"

namespace bfvi {

// Beta(alpha, beta) with pdf/log-pdf/cdf and a gamma-ratio sampler.
class BetaDistribution {
 public:
  BetaDistribution(double alpha, double beta);
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  double mean() const { return alpha_ / (alpha_ + beta_); }
  double pdf(double x) const;
  double log_pdf(double x) const;
  double cdf(double x) const;
  double sample(Rng& rng) const;

  // Density of logit(x) under this Beta, for comparisons in unconstrained
  // space.
  double log_pdf_unconstrained(double theta) const;

 private:
  double alpha_, beta_;
};

// Posterior of a Bernoulli probability under a Beta(alpha0, beta0) prior.
BetaDistribution analytic_beta_posterior(double alpha0, double beta0,
                                         std::span<const double> y);

// Normalized posterior density table over a uniform grid in unconstrained
// space, with CDF and the strict local maxima of the table.
struct GridPosterior {
  std::vector<double> grid;
  std::vector<double> density;  // normalized
  std::vector<double> cdf;
  std::vector<double> modes;        // grid locations of strict local maxima
  double log_evidence = 0.0;

  double density_at(double x) const;  // linear interpolation
  double cdf_at(double x) const;
};

GridPosterior grid_posterior_1d(const ProbabilisticModel& model, double lo,
                                double hi, int nodes);

struct McmcChain {
  std::vector<double> draws;  // n_kept x dim, row-major, unconstrained space
  std::vector<double> log_joint;
  int dim = 0;
  double acceptance_rate = 0.0;
  int n_warmup = 0;
  int n_kept = 0;
  int thinning = 1;
  std::uint64_t seed = 0;

  std::span<const double> row(std::size_t i) const {
    return {draws.data() + i * static_cast<std::size_t>(dim),
            static_cast<std::size_t>(dim)};
  }
  std::vector<double> column(int j) const;
};

// Adaptive Gaussian random-walk Metropolis in unconstrained space. Proposal
// scales are diagonal: a global factor tuned to the 0.234 (0.44 for dim 1)
// acceptance target and per-coordinate factors from the warmup variance.
// Adaptation freezes after warmup.
McmcChain rwm_sample(const ProbabilisticModel& model, int n_warmup, int n_kept,
                     int thinning, std::uint64_t seed);

struct ChainDiagnostics {
  std::vector<double> split_rhat;  // per dimension
  std::vector<double> ess;         // per dimension
  double max_rhat = 0.0;
};

// Standard split-Rhat and autocorrelation-based ESS over >= 2 equal-length
// chains. Reference chains must satisfy max_rhat < 1.01 before use.
ChainDiagnostics chain_diagnostics(std::span<const McmcChain> chains);

// Same diagnostics over arbitrary derived scalars (one vector per chain per
// quantity), for models whose raw coordinates are not identified.
ChainDiagnostics chain_diagnostics_scalar(
    const std::vector<std::vector<std::vector<double>>>& per_chain_quantities);

}  // namespace bfvi
