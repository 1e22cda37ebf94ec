#include "bfvi/models.hpp"

#include <algorithm>
#include <cmath>

#include "bfvi/math.hpp"
#include "bfvi/scalar.hpp"

namespace bfvi {

void Dataset::add_column(std::string name, std::vector<double> values) {
  if (!cols_.empty() && values.size() != cols_.front().size()) {
    throw DataError("Dataset: column '" + name + "' has " +
                    std::to_string(values.size()) + " rows, expected " +
                    std::to_string(cols_.front().size()));
  }
  names_.push_back(std::move(name));
  cols_.push_back(std::move(values));
}

std::span<const double> Dataset::col(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (names_[i] == name) return cols_[i];
  }
  throw DataError("Dataset: missing column '" + std::string(name) + "'");
}

bool Dataset::has(std::string_view name) const {
  return std::any_of(names_.begin(), names_.end(),
                     [&](const std::string& n) { return n == name; });
}

std::size_t Dataset::rows() const { return cols_.empty() ? 0 : cols_.front().size(); }

double constrain_value(Constraint c, double u) {
  switch (c) {
    case Constraint::identity: return u;
    case Constraint::unit_interval: return num::sigmoid(u);
    case Constraint::positive: return std::exp(u);
  }
  return u;
}

double unconstrain_value(Constraint c, double x) {
  switch (c) {
    case Constraint::identity: return x;
    case Constraint::unit_interval: return std::log(x) - std::log1p(-x);
    case Constraint::positive: return std::log(x);
  }
  return x;
}

double constrain_log_jacobian(Constraint c, double u) {
  switch (c) {
    case Constraint::identity: return 0.0;
    case Constraint::unit_interval:
      return -num::softplus(u) - num::softplus(-u);
    case Constraint::positive: return u;
  }
  return 0.0;
}

std::vector<double> ProbabilisticModel::constrain(
    std::span<const double> u) const {
  std::vector<double> out(u.size());
  for (std::size_t j = 0; j < u.size(); ++j) {
    out[j] = constrain_value(constraints[j], u[j]);
  }
  return out;
}

std::vector<double> ProbabilisticModel::unconstrain(
    std::span<const double> x) const {
  std::vector<double> out(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) {
    out[j] = unconstrain_value(constraints[j], x[j]);
  }
  return out;
}

namespace {

// Iterate the requested rows, or all of them when the subset is empty.
template <class Fn>
void for_rows(std::size_t n, RowSubset rows, Fn&& fn) {
  if (rows.empty()) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
  } else {
    for (std::int32_t i : rows) fn(static_cast<std::size_t>(i));
  }
}

// Zero of the scalar type carried by th; for traced scalars this is a node on
// the same tape, so empty-data likelihoods still participate in the graph.
template <class Span>
auto zero_like(Span th) {
  return th[0] * 0.0;
}

// Wires one generic (double | ad::Var) density pair into the type-erased
// model interface.
template <class PriorFn, class LikFn>
void wire(ProbabilisticModel& m, std::shared_ptr<const Dataset> data,
          PriorFn prior, LikFn lik) {
  m.data = data;
  m.log_prior = [prior, data](std::span<const double> th) {
    return prior(th, *data);
  };
  m.log_prior_traced = [prior, data](std::span<const ad::Var> th) {
    return prior(th, *data);
  };
  m.log_lik = [lik, data](std::span<const double> th, RowSubset rows) {
    return lik(th, *data, rows);
  };
  m.log_lik_traced = [lik, data](std::span<const ad::Var> th, RowSubset rows) {
    return lik(th, *data, rows);
  };
}

}  // namespace

ProbabilisticModel bernoulli_beta_model(std::vector<double> y, double a0,
                                        double b0) {
  for (double v : y) {
    if (v != 0.0 && v != 1.0) {
      throw DataError("bernoulli_beta_model: y must be binary");
    }
  }
  const double n = static_cast<double>(y.size());
  double sum_y = 0.0;
  for (double v : y) sum_y += v;
  const double a_post = a0 + sum_y;
  const double b_post = b0 + n - sum_y;

  Dataset d;
  d.add_column("y", std::move(y));
  auto data = std::make_shared<const Dataset>(std::move(d));

  ProbabilisticModel m;
  m.name = "bernoulli";
  m.dim = 1;
  m.param_names = {"pi"};
  m.constraints = {Constraint::unit_interval};
  m.analytic_log_evidence =
      num::log_beta_fn(a_post, b_post) - num::log_beta_fn(a0, b0);
  m.analytic_log_posterior = [a_post, b_post](std::span<const double> th) {
    const double p = num::sigmoid(th[0]);
    return num::beta_lpdf(p, a_post, b_post) +
           constrain_log_jacobian(Constraint::unit_interval, th[0]);
  };

  auto prior = [a0, b0](auto th, const Dataset&) {
    auto p = sm::sigmoid(th[0]);
    return sm::beta_lpdf_unit(p, a0, b0) + sm::log_sigmoid_jacobian(th[0]);
  };
  auto lik = [](auto th, const Dataset& d, RowSubset rows) {
    auto y = d.col("y");
    // log pi = -softplus(-theta), log(1-pi) = -softplus(theta)
    auto lp1 = -sm::softplus(-th[0]);
    auto lp0 = -sm::softplus(th[0]);
    double n1 = 0.0, n0 = 0.0;
    for_rows(y.size(), rows, [&](std::size_t i) { (y[i] == 1.0 ? n1 : n0) += 1.0; });
    return n1 * lp1 + n0 * lp0;
  };
  wire(m, data, prior, lik);
  return m;
}

ProbabilisticModel cauchy_model(std::vector<double> y, double scale) {
  Dataset d;
  d.add_column("y", std::move(y));
  auto data = std::make_shared<const Dataset>(std::move(d));

  ProbabilisticModel m;
  m.name = "cauchy";
  m.dim = 1;
  m.param_names = {"xi"};
  m.constraints = {Constraint::identity};

  auto prior = [](auto th, const Dataset&) {
    return sm::normal_lpdf(th[0], 0.0, 1.0);
  };
  auto lik = [scale](auto th, const Dataset& d, RowSubset rows) {
    auto y = d.col("y");
    auto acc = zero_like(th);
    for_rows(y.size(), rows, [&](std::size_t i) {
      acc = acc + sm::cauchy_lpdf(y[i], th[0], scale);
    });
    return acc;
  };
  wire(m, data, prior, lik);
  return m;
}

ProbabilisticModel toy_linreg_model(Dataset d) {
  if (d.col("x1").size() != d.col("y").size() ||
      d.col("x2").size() != d.col("y").size()) {
    throw DataError("toy_linreg_model: column length mismatch");
  }
  auto data = std::make_shared<const Dataset>(std::move(d));

  ProbabilisticModel m;
  m.name = "toy_linreg";
  m.dim = 4;
  m.param_names = {"mu0", "beta1", "beta2", "sigma"};
  m.constraints = {Constraint::identity, Constraint::identity,
                   Constraint::identity, Constraint::positive};

  auto prior = [](auto th, const Dataset&) {
    // lognormal(0.5, 1) on sigma with the exp-bijector jacobian folds to a
    // normal density on log sigma.
    return sm::normal_lpdf(th[0], 0.0, 10.0) + sm::normal_lpdf(th[1], 0.0, 10.0) +
           sm::normal_lpdf(th[2], 0.0, 10.0) + sm::normal_lpdf(th[3], 0.5, 1.0);
  };
  auto lik = [](auto th, const Dataset& d, RowSubset rows) {
    auto x1 = d.col("x1");
    auto x2 = d.col("x2");
    auto y = d.col("y");
    auto sigma = sm::exp(th[3]);
    auto log_sigma = th[3];
    auto acc = zero_like(th);
    for_rows(y.size(), rows, [&](std::size_t i) {
      auto mu = th[0] + th[1] * x1[i] + th[2] * x2[i];
      auto zres = (y[i] - mu) / sigma;
      acc = acc + (-0.5 * num::log_two_pi - log_sigma - 0.5 * sm::square(zres));
    });
    return acc;
  };
  wire(m, data, prior, lik);
  return m;
}

ProbabilisticModel eight_schools_model(EightSchoolsParam param, Dataset d) {
  auto y0 = d.col("y");
  auto s0 = d.col("sigma");
  if (y0.size() != s0.size() || y0.empty()) {
    throw DataError("eight_schools_model: y/sigma length mismatch");
  }
  const std::size_t J = y0.size();
  auto data = std::make_shared<const Dataset>(std::move(d));
  const bool centered = param == EightSchoolsParam::centered;

  ProbabilisticModel m;
  m.name = centered ? "eight_schools_cp" : "eight_schools_ncp";
  m.dim = static_cast<int>(J) + 2;
  m.param_names = {"mu", "tau"};
  for (std::size_t j = 1; j <= J; ++j) {
    m.param_names.push_back(std::string(centered ? "theta" : "theta_tilde") +
                            std::to_string(j));
  }
  m.constraints.assign(static_cast<std::size_t>(m.dim), Constraint::identity);
  m.constraints[1] = Constraint::positive;

  auto prior = [centered, J](auto th, const Dataset&) {
    auto tau = sm::exp(th[1]);
    // half-Cauchy(0,5) on tau plus the exp-bijector jacobian th[1]
    auto lp =
        sm::normal_lpdf(th[0], 0.0, 5.0) + sm::half_cauchy_lpdf(tau, 5.0) + th[1];
    if (centered) {
      for (std::size_t j = 0; j < J; ++j) {
        lp = lp + sm::normal_lpdf(th[2 + j], th[0], tau);
      }
    } else {
      for (std::size_t j = 0; j < J; ++j) {
        lp = lp + sm::normal_lpdf(th[2 + j], 0.0, 1.0);
      }
    }
    return lp;
  };
  auto lik = [centered, J](auto th, const Dataset& d, RowSubset rows) {
    auto y = d.col("y");
    auto sig = d.col("sigma");
    auto tau = sm::exp(th[1]);
    auto acc = zero_like(th);
    for_rows(J, rows, [&](std::size_t j) {
      if (centered) {
        auto zres = (y[j] - th[2 + j]) / sig[j];
        acc = acc +
              (-0.5 * num::log_two_pi - std::log(sig[j]) - 0.5 * sm::square(zres));
      } else {
        auto school_mean = th[0] + tau * th[2 + j];
        auto zres = (y[j] - school_mean) / sig[j];
        acc = acc +
              (-0.5 * num::log_two_pi - std::log(sig[j]) - 0.5 * sm::square(zres));
      }
    });
    return acc;
  };
  wire(m, data, prior, lik);
  return m;
}

ProbabilisticModel bnn_regression_model(Dataset d, double sigma) {
  if (d.col("x").size() != d.col("y").size()) {
    throw DataError("bnn_regression_model: column length mismatch");
  }
  auto data = std::make_shared<const Dataset>(std::move(d));

  ProbabilisticModel m;
  m.name = "bnn_regression";
  m.dim = 10;
  m.param_names = {"w1", "w2", "w3", "b1", "b2", "b3",
                   "v1", "v2", "v3", "c_out"};
  m.constraints.assign(10, Constraint::identity);

  auto prior = [](auto th, const Dataset&) {
    auto acc = sm::normal_lpdf(th[0], 0.0, 1.0);
    for (std::size_t j = 1; j < 10; ++j) {
      acc = acc + sm::normal_lpdf(th[j], 0.0, 1.0);
    }
    return acc;
  };
  auto lik = [sigma](auto th, const Dataset& d, RowSubset rows) {
    auto x = d.col("x");
    auto y = d.col("y");
    auto acc = zero_like(th);
    for_rows(y.size(), rows, [&](std::size_t i) {
      auto h1 = sm::sigmoid(th[3] + th[0] * x[i]);
      auto h2 = sm::sigmoid(th[4] + th[1] * x[i]);
      auto h3 = sm::sigmoid(th[5] + th[2] * x[i]);
      auto mu = th[9] + th[6] * h1 + th[7] * h2 + th[8] * h3;
      auto zres = (y[i] - mu) / sigma;
      acc = acc +
            (-0.5 * num::log_two_pi - std::log(sigma) - 0.5 * sm::square(zres));
    });
    return acc;
  };
  wire(m, data, prior, lik);
  // Fused traced likelihood: one tape node with hand partials. The network is
  // tiny but the trainer evaluates it millions of times.
  m.log_lik_traced = [data, sigma](std::span<const ad::Var> th,
                                   RowSubset rows) {
    auto x = data->col("x");
    auto y = data->col("y");
    double value = 0.0;
    double g[10] = {0.0};
    for_rows(y.size(), rows, [&](std::size_t i) {
      double h[3], pre[3];
      for (int k = 0; k < 3; ++k) {
        pre[k] = th[static_cast<std::size_t>(3 + k)].value() +
                 th[static_cast<std::size_t>(k)].value() * x[i];
        h[k] = num::sigmoid(pre[k]);
      }
      double mu = th[9].value();
      for (int k = 0; k < 3; ++k) mu += th[static_cast<std::size_t>(6 + k)].value() * h[k];
      const double r = (y[i] - mu) / sigma;
      value += -0.5 * num::log_two_pi - std::log(sigma) - 0.5 * r * r;
      const double dmu = r / sigma;  // d lpdf / d mu
      g[9] += dmu;
      for (int k = 0; k < 3; ++k) {
        const double vk = th[static_cast<std::size_t>(6 + k)].value();
        const double hp = h[k] * (1.0 - h[k]);
        g[6 + k] += dmu * h[k];
        g[3 + k] += dmu * vk * hp;
        g[k] += dmu * vk * hp * x[i];
      }
    });
    ad::Tape& t = *th[0].tape;
    for (int j = 0; j < 10; ++j) {
      t.push_parent(th[static_cast<std::size_t>(j)].id, g[j]);
    }
    return ad::Var{&t, t.seal(ad::OpKind::custom, value), value};
  };
  return m;
}

double bnn_predictive_mean(std::span<const double> theta, double x) {
  double mu = theta[9];
  for (int k = 0; k < 3; ++k) {
    mu += theta[static_cast<std::size_t>(6 + k)] *
          num::sigmoid(theta[static_cast<std::size_t>(3 + k)] +
                       theta[static_cast<std::size_t>(k)] * x);
  }
  return mu;
}

ProbabilisticModel diamonds_model(Dataset d) {
  auto y0 = d.col("y");
  std::vector<std::string> pred_names;
  for (const std::string& n : d.names()) {
    if (n != "y") pred_names.push_back(n);
  }
  if (pred_names.empty()) throw DataError("diamonds_model: no predictors");
  const std::size_t K = pred_names.size();
  const std::size_t N = y0.size();

  // Center the predictors once, as the model's data block prescribes.
  auto centered = std::make_shared<std::vector<std::vector<double>>>();
  centered->reserve(K);
  for (const std::string& n : pred_names) {
    auto c = d.col(n);
    const double mu = num::mean(c);
    std::vector<double> col(c.begin(), c.end());
    for (double& v : col) v -= mu;
    centered->push_back(std::move(col));
  }
  auto data = std::make_shared<const Dataset>(std::move(d));

  ProbabilisticModel m;
  m.name = "diamonds";
  m.dim = static_cast<int>(K) + 2;
  m.param_names = pred_names;
  for (auto& n : m.param_names) n = "b_" + n;
  m.param_names.push_back("Intercept");
  m.param_names.push_back("sigma");
  m.constraints.assign(static_cast<std::size_t>(m.dim), Constraint::identity);
  m.constraints.back() = Constraint::positive;

  auto prior = [K](auto th, const Dataset&) {
    auto acc = sm::normal_lpdf(th[0], 0.0, 1.0);
    for (std::size_t j = 1; j < K; ++j) {
      acc = acc + sm::normal_lpdf(th[j], 0.0, 1.0);
    }
    auto sigma = sm::exp(th[K + 1]);
    // half-student-t(3,0,10): the complementary cdf at 0 is 1/2
    return acc + sm::student_t_lpdf(th[K], 3.0, 8.0, 10.0) +
           sm::student_t_lpdf(sigma, 3.0, 0.0, 10.0) - std::log(0.5) + th[K + 1];
  };
  auto lik = [K, N, centered](auto th, const Dataset& d, RowSubset rows) {
    auto y = d.col("y");
    auto sigma = sm::exp(th[K + 1]);
    auto log_sigma = th[K + 1];
    auto acc = zero_like(th);
    for_rows(N, rows, [&](std::size_t i) {
      auto mu = th[K];
      for (std::size_t k = 0; k < K; ++k) mu = mu + th[k] * (*centered)[k][i];
      auto zres = (y[i] - mu) / sigma;
      acc = acc + (-0.5 * num::log_two_pi - log_sigma - 0.5 * sm::square(zres));
    });
    return acc;
  };
  wire(m, data, prior, lik);
  // Fused traced likelihood (one node, hand partials): the minibatched
  // trainer otherwise spends most of its time creating per-row tape nodes.
  m.log_lik_traced = [data, centered, K, N](std::span<const ad::Var> th,
                                            RowSubset rows) {
    auto y = data->col("y");
    const double sigma = std::exp(th[K + 1].value());
    double value = 0.0;
    std::vector<double> g(K + 2, 0.0);
    for_rows(N, rows, [&](std::size_t i) {
      double mu = th[K].value();
      for (std::size_t k = 0; k < K; ++k) {
        mu += th[k].value() * (*centered)[k][i];
      }
      const double r = (y[i] - mu) / sigma;
      value += -0.5 * num::log_two_pi - th[K + 1].value() - 0.5 * r * r;
      const double dmu = r / sigma;
      for (std::size_t k = 0; k < K; ++k) g[k] += dmu * (*centered)[k][i];
      g[K] += dmu;
      g[K + 1] += r * r - 1.0;
    });
    ad::Tape& t = *th[0].tape;
    for (std::size_t j = 0; j < K + 2; ++j) t.push_parent(th[j].id, g[j]);
    return ad::Var{&t, t.seal(ad::OpKind::custom, value), value};
  };
  return m;
}

}  // namespace bfvi
