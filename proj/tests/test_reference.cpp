#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "bfvi/math.hpp"
#include "bfvi/models.hpp"
#include "bfvi/quadrature.hpp"
#include "bfvi/reference.hpp"
#include "bfvi/rng.hpp"
#include "test_util.hpp"

using namespace bfvi;

namespace {

ProbabilisticModel pseudo_model(
    std::function<double(std::span<const double>)> log_joint, int dim) {
  ProbabilisticModel m;
  m.name = "pseudo";
  m.dim = dim;
  for (int j = 0; j < dim; ++j) m.param_names.push_back("x" + std::to_string(j));
  m.constraints.assign(static_cast<std::size_t>(dim), Constraint::identity);
  m.data = std::make_shared<const Dataset>();
  m.log_prior = std::move(log_joint);
  m.log_lik = [](std::span<const double>, RowSubset) { return 0.0; };
  return m;
}

}  // namespace

TEST_CASE("beta posterior descriptors") {
  const BetaDistribution post = analytic_beta_posterior(1.1, 1.1, {{1.0, 1.0}});
  CHECK(post.alpha() == doctest::Approx(3.1));
  CHECK(post.beta() == doctest::Approx(1.1));
  CHECK(post.mean() == doctest::Approx(3.1 / 4.2).epsilon(1e-12));

  SUBCASE("no data keeps the prior") {
    const BetaDistribution prior = analytic_beta_posterior(2.0, 3.0, {});
    CHECK(prior.alpha() == doctest::Approx(2.0));
    CHECK(prior.beta() == doctest::Approx(3.0));
  }
  SUBCASE("cdf agrees with integrated pdf") {
    for (double x : {0.1, 0.35, 0.62, 0.9}) {
      const double numeric =
          integrate([&](double v) { return post.pdf(v); }, 1e-12, x, 512);
      CHECK(post.cdf(x) == doctest::Approx(numeric).epsilon(1e-8));
    }
  }
  SUBCASE("sampler moments") {
    Rng rng(81);
    std::vector<double> draws(40000);
    for (double& d : draws) d = post.sample(rng);
    const double a = post.alpha(), b = post.beta();
    const double want_mean = a / (a + b);
    const double want_var = a * b / ((a + b) * (a + b) * (a + b + 1.0));
    CHECK(num::mean(draws) == doctest::Approx(want_mean).epsilon(0.01));
    CHECK(num::variance(draws) == doctest::Approx(want_var).epsilon(0.05));
  }
}

TEST_CASE("grid posterior") {
  SUBCASE("conjugate table matches the analytic density pointwise") {
    const ProbabilisticModel m = bernoulli_beta_model();
    const BetaDistribution post =
        analytic_beta_posterior(1.1, 1.1, m.data->col("y"));
    const GridPosterior grid = grid_posterior_1d(m, -16.0, 26.0, 20001);
    for (double th = -5.0; th <= 9.0; th += 0.5) {
      CHECK(grid.density_at(th) ==
            doctest::Approx(std::exp(post.log_pdf_unconstrained(th)))
                .epsilon(1e-6));
    }
  }
  SUBCASE("normalization") {
    const ProbabilisticModel m = cauchy_model();
    const GridPosterior grid = grid_posterior_1d(m, -12.0, 12.0, 20001);
    double mass = 0.0;
    const double step = grid.grid[1] - grid.grid[0];
    for (std::size_t i = 1; i < grid.density.size(); ++i) {
      mass += 0.5 * step * (grid.density[i - 1] + grid.density[i]);
    }
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-8));
  }
  SUBCASE("flat joint gives a uniform table") {
    const ProbabilisticModel flat =
        pseudo_model([](std::span<const double>) { return 0.0; }, 1);
    const GridPosterior grid = grid_posterior_1d(flat, 0.0, 2.0, 101);
    for (double d : grid.density) CHECK(d == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(grid.modes.empty());
  }
}

TEST_CASE("random-walk sampler hits known targets") {
  SUBCASE("standard normal pseudo-model") {
    const ProbabilisticModel m = pseudo_model(
        [](std::span<const double> th) { return num::std_normal_lpdf(th[0]); },
        1);
    const McmcChain chain = rwm_sample(m, 4000, 20000, 1, 91);
    const std::vector<double> draws = chain.column(0);
    CHECK(std::abs(num::mean(draws)) <= 0.03);
    CHECK(std::abs(num::variance(draws) - 1.0) <= 0.05);
    CHECK(chain.acceptance_rate > 0.3);
    CHECK(chain.acceptance_rate < 0.6);
  }
  SUBCASE("conjugate bernoulli in constrained space") {
    const ProbabilisticModel m = bernoulli_beta_model();
    const McmcChain chain = rwm_sample(m, 4000, 20000, 1, 92);
    std::vector<double> pis(static_cast<std::size_t>(chain.n_kept));
    for (int i = 0; i < chain.n_kept; ++i) {
      pis[static_cast<std::size_t>(i)] =
          num::sigmoid(chain.row(static_cast<std::size_t>(i))[0]);
    }
    CHECK(std::abs(num::mean(pis) - 0.7381) <= 0.01);

    // KS distance against the analytic CDF
    const BetaDistribution post = analytic_beta_posterior(1.1, 1.1, m.data->col("y"));
    std::sort(pis.begin(), pis.end());
    double ks = 0.0;
    const double n = static_cast<double>(pis.size());
    for (std::size_t i = 0; i < pis.size(); ++i) {
      const double F = post.cdf(pis[i]);
      ks = std::max(ks, std::abs((static_cast<double>(i) + 1.0) / n - F));
      ks = std::max(ks, std::abs(static_cast<double>(i) / n - F));
    }
    CHECK(ks <= 0.02);
  }
  SUBCASE("same seed, same chain") {
    const ProbabilisticModel m = cauchy_model();
    const McmcChain a = rwm_sample(m, 500, 1000, 1, 93);
    const McmcChain b = rwm_sample(m, 500, 1000, 1, 93);
    for (std::size_t i = 0; i < a.draws.size(); ++i) CHECK(a.draws[i] == b.draws[i]);
  }
}

TEST_CASE("toy regression chain shows the known geometry") {
  Dataset d;
  d.add_column("x1", {1.3709584, -0.5646982, 0.3631284, 0.6328626, 0.4042683,
                      -0.1061245});
  d.add_column("x2", {1.48475156, -1.42449894, 0.10432308, 0.27923186,
                      0.09138635, -0.53519391});
  d.add_column("y", {-1.46778013, -0.09421285, -0.41162052, -0.31177232,
                     -0.52569912, -1.22375575});
  const ProbabilisticModel m = toy_linreg_model(std::move(d));
  const McmcChain chain = rwm_sample(m, 40000, 50000, 4, 94);
  const std::vector<double> b1 = chain.column(1);
  const std::vector<double> b2 = chain.column(2);
  CHECK(num::correlation(b1, b2) < -0.9);
  // sigma marginal in constrained space is right-skewed
  std::vector<double> sigma = chain.column(3);
  for (double& v : sigma) v = std::exp(v);
  CHECK(num::skewness(sigma) > 0.0);
}

TEST_CASE("chain diagnostics") {
  SUBCASE("duplicated chains have unit rhat") {
    const ProbabilisticModel m = pseudo_model(
        [](std::span<const double> th) { return num::std_normal_lpdf(th[0]); },
        1);
    const McmcChain chain = rwm_sample(m, 1000, 4000, 1, 95);
    const std::vector<McmcChain> chains = {chain, chain};
    const ChainDiagnostics diag = chain_diagnostics(chains);
    CHECK(diag.split_rhat[0] <= 1.001);
  }
  SUBCASE("chains stuck in different modes are flagged") {
    std::vector<std::vector<std::vector<double>>> quantities(1);
    Rng rng(96);
    for (int c = 0; c < 2; ++c) {
      std::vector<double> vals(4000);
      for (double& v : vals) v = (c == 0 ? -3.0 : 3.0) + rng.normal();
      quantities[0].push_back(std::move(vals));
    }
    const ChainDiagnostics diag = chain_diagnostics_scalar(quantities);
    CHECK(diag.split_rhat[0] > 1.2);
  }
  SUBCASE("iid draws have full effective sample size") {
    std::vector<std::vector<std::vector<double>>> quantities(1);
    Rng rng(97);
    const int n = 5000, c = 4;
    for (int i = 0; i < c; ++i) {
      std::vector<double> vals(static_cast<std::size_t>(n));
      for (double& v : vals) v = rng.normal();
      quantities[0].push_back(std::move(vals));
    }
    const ChainDiagnostics diag = chain_diagnostics_scalar(quantities);
    CHECK(diag.ess[0] == doctest::Approx(n * c).epsilon(0.2));
    CHECK(diag.split_rhat[0] < 1.01);
  }
  SUBCASE("fewer than two chains is an error") {
    const std::vector<McmcChain> one(1);
    CHECK_THROWS_AS((void)chain_diagnostics(one), std::invalid_argument);
  }
}

TEST_CASE("cauchy chains visit both posterior modes") {
  const ProbabilisticModel m = cauchy_model();
  const McmcChain chain = rwm_sample(m, 20000, 40000, 2, 98);
  int neg = 0, pos = 0;
  for (int i = 0; i < chain.n_kept; ++i) {
    (chain.row(static_cast<std::size_t>(i))[0] < 0.0 ? neg : pos) += 1;
  }
  const double frac_neg = static_cast<double>(neg) / chain.n_kept;
  CHECK(frac_neg > 0.10);
  CHECK(1.0 - frac_neg > 0.10);
}
