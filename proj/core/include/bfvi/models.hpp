#pragma once

// Benchmark Bayesian models. Every model works on an unconstrained parameter
// vector: positivity and unit-interval constraints are applied inside the
// model, with the bijector log-Jacobians folded into the log-prior, so one
// flow recipe covers all supports.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bfvi/tape.hpp"

namespace bfvi {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Named real columns of equal length.
class Dataset {
 public:
  Dataset() = default;

  void add_column(std::string name, std::vector<double> values);
  std::span<const double> col(std::string_view name) const;  // DataError if absent
  bool has(std::string_view name) const;
  std::size_t rows() const;
  std::size_t n_cols() const { return names_.size(); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::vector<std::vector<double>> cols_;
};

enum class Constraint : std::uint8_t {
  identity,      // theta on the whole real line
  unit_interval, // sigmoid(theta) in (0,1)
  positive,      // exp(theta) in (0,inf)
};

double constrain_value(Constraint c, double u);
double unconstrain_value(Constraint c, double x);
double constrain_log_jacobian(Constraint c, double u);

using RowSubset = std::span<const std::int32_t>;

struct ProbabilisticModel {
  std::string name;
  int dim = 0;
  std::vector<std::string> param_names;
  std::vector<Constraint> constraints;
  std::shared_ptr<const Dataset> data;

  // Densities over the unconstrained vector; the prior carries the constraint
  // log-Jacobians. An empty row subset means the full dataset.
  std::function<double(std::span<const double>)> log_prior;
  std::function<double(std::span<const double>, RowSubset)> log_lik;
  std::function<ad::Var(std::span<const ad::Var>)> log_prior_traced;
  std::function<ad::Var(std::span<const ad::Var>, RowSubset)> log_lik_traced;

  std::optional<double> analytic_log_evidence;
  std::function<double(std::span<const double>)> analytic_log_posterior;

  double log_joint(std::span<const double> theta) const {
    return log_prior(theta) + log_lik(theta, {});
  }
  std::vector<double> constrain(std::span<const double> u) const;
  std::vector<double> unconstrain(std::span<const double> x) const;
};

// y ~ Bernoulli(pi), pi ~ Beta(a0, b0); conjugate Beta posterior.
ProbabilisticModel bernoulli_beta_model(std::vector<double> y = {1.0, 1.0},
                                        double a0 = 1.1, double b0 = 1.1);

// y ~ Cauchy(xi, scale) with known scale, xi ~ N(0,1). The default data are
// six draws from a two-component Cauchy mixture, which makes the posterior
// bimodal.
ProbabilisticModel cauchy_model(
    std::vector<double> y = {1.2083935, -2.7329216, 4.1769943, 1.9710574,
                             -4.2004027, -2.384988},
    double scale = 0.5);

// y ~ N(mu0 + b1 x1 + b2 x2, sigma); b,w ~ N(0,10), sigma ~ lognormal(0.5,1).
// Dataset columns: x1, x2, y.
ProbabilisticModel toy_linreg_model(Dataset data);

enum class EightSchoolsParam { centered, non_centered };

// Hierarchical normal model over J schools; mu ~ N(0,5), tau ~ half-Cauchy(0,5).
// Dataset columns: y, sigma.
ProbabilisticModel eight_schools_model(EightSchoolsParam param, Dataset data);

// One-hidden-layer (3 logistic units) regression network, all weights N(0,1),
// fixed observation noise. Dataset columns: x, y.
ProbabilisticModel bnn_regression_model(Dataset data, double sigma = 0.2);

// Gaussian linear regression with centered predictors; b ~ N(0,1), Intercept ~
// student_t(3,8,10), sigma ~ half-student_t(3,0,10). Dataset columns: y plus
// the predictor columns (every non-y column is a predictor).
ProbabilisticModel diamonds_model(Dataset data);

// Conditional mean of the regression network at x for a parameter draw.
double bnn_predictive_mean(std::span<const double> theta, double x);

}  // namespace bfvi
