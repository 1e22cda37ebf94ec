#include <doctest.h>

#include <cmath>

#include "bfvi/diagnostics.hpp"
#include "bfvi/math.hpp"
#include "bfvi/models.hpp"
#include "bfvi/reference.hpp"
#include "bfvi/rng.hpp"
#include "bfvi/vi.hpp"

using namespace bfvi;

namespace {

// Inverse-CDF sampler for GPD(k, sigma): x = sigma ((1-u)^{-k} - 1) / k.
double sample_gpd(double k, double sigma, Rng& rng) {
  const double u = rng.uniform01();
  if (std::abs(k) < 1e-12) return -sigma * std::log(u);
  return sigma * (std::pow(u, -k) - 1.0) / k;
}

// Model with unit likelihood and standard-normal prior.
ProbabilisticModel flat_likelihood_model() {
  ProbabilisticModel m;
  m.name = "pseudo_flat";
  m.dim = 1;
  m.param_names = {"x"};
  m.constraints = {Constraint::identity};
  m.data = std::make_shared<const Dataset>();
  m.log_prior = [](std::span<const double> th) {
    return num::std_normal_lpdf(th[0]);
  };
  m.log_lik = [](std::span<const double>, RowSubset) { return 0.0; };
  return m;
}

}  // namespace

TEST_CASE("verdict bands are left-closed at 0.5 and 0.7") {
  CHECK(verdict_for(0.49) == PsisVerdict::close);
  CHECK(verdict_for(0.5) == PsisVerdict::useful);
  CHECK(verdict_for(0.69999) == PsisVerdict::useful);
  CHECK(verdict_for(0.7) == PsisVerdict::poor);
  CHECK(verdict_for(-2.0) == PsisVerdict::close);
  CHECK(verdict_for(31.0) == PsisVerdict::poor);
}

TEST_CASE("importance ratios are constant when q is the exact posterior") {
  const ProbabilisticModel model = bernoulli_beta_model();
  const BetaDistribution post =
      analytic_beta_posterior(1.1, 1.1, model.data->col("y"));
  Rng rng(61);
  SampleBank bank;
  bank.dim = 1;
  for (int s = 0; s < 500; ++s) {
    const double p = post.sample(rng);
    const double th = std::log(p) - std::log1p(-p);
    bank.z.push_back(0.0);
    bank.theta.push_back(th);
    bank.log_q.push_back(post.log_pdf_unconstrained(th));
  }
  const std::vector<double> lr = importance_log_ratios(bank, model);
  double lo = lr[0], hi = lr[0];
  for (double v : lr) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  CHECK(hi - lo <= 1e-10);
  CHECK(lr[0] == doctest::Approx(*model.analytic_log_evidence).epsilon(1e-9));
}

TEST_CASE("q = prior with unit likelihood gives unit ratios") {
  const ProbabilisticModel model = flat_likelihood_model();
  Rng rng(62);
  SampleBank bank;
  bank.dim = 1;
  for (int s = 0; s < 300; ++s) {
    const double th = rng.normal();
    bank.z.push_back(th);
    bank.theta.push_back(th);
    bank.log_q.push_back(num::std_normal_lpdf(th));
  }
  const std::vector<double> lr = importance_log_ratios(bank, model);
  for (double v : lr) CHECK(v == 0.0);
}

TEST_CASE("light-tailed q against a heavy posterior skews the log ratios") {
  // q = N(0,1) samples, target joint = student-t(3)
  ProbabilisticModel m = flat_likelihood_model();
  m.log_prior = [](std::span<const double> th) {
    return num::student_t_lpdf(th[0], 3.0, 0.0, 1.0);
  };
  Rng rng(63);
  SampleBank bank;
  bank.dim = 1;
  for (int s = 0; s < 4000; ++s) {
    const double th = rng.normal();
    bank.z.push_back(th);
    bank.theta.push_back(th);
    bank.log_q.push_back(num::std_normal_lpdf(th));
  }
  const std::vector<double> lr = importance_log_ratios(bank, m);
  CHECK(num::skewness(lr) > 0.0);
}

TEST_CASE("gpd tail fit recovers synthetic shapes") {
  SUBCASE("k = 0.4 heavy tail") {
    // median over a few draws; a single tail of ~190 points has sd(k) ~ 0.1
    Rng rng(64);
    std::vector<double> khats;
    int tail_count = 0;
    for (int rep = 0; rep < 7; ++rep) {
      std::vector<double> x(4000);
      for (double& v : x) v = sample_gpd(0.4, 1.0, rng);
      const GpdFit fit = fit_gpd_tail(x);
      khats.push_back(fit.k_hat);
      tail_count = fit.tail_count;
    }
    CHECK(tail_count == 190);  // min(ceil(0.2*4000), ceil(3*sqrt(4000)))
    const double med = num::median(khats);
    CHECK(med > 0.3);
    CHECK(med < 0.5);
  }
  SUBCASE("exponential tail is k = 0") {
    Rng rng(65);
    std::vector<double> khats;
    for (int rep = 0; rep < 7; ++rep) {
      std::vector<double> x(4000);
      for (double& v : x) v = sample_gpd(0.0, 1.0, rng);
      khats.push_back(fit_gpd_tail(x).k_hat);
    }
    const double med = num::median(khats);
    CHECK(med > -0.1);
    CHECK(med < 0.1);
  }
  SUBCASE("constant ratios degenerate") {
    const std::vector<double> x(500, 1.0);
    CHECK_THROWS_AS((void)fit_gpd_tail(x), DegenerateTailError);
  }
  SUBCASE("too few samples") {
    const std::vector<double> x(99, 1.0);
    CHECK_THROWS_AS((void)fit_gpd_tail(x), std::invalid_argument);
  }
  SUBCASE("median recovery over replications (reduced grid)") {
    Rng rng(66);
    for (double k : {-0.2, 0.0, 0.3, 0.7}) {
      std::vector<double> khats;
      for (int rep = 0; rep < 40; ++rep) {
        std::vector<double> x(4000);
        for (double& v : x) v = sample_gpd(k, 1.0, rng);
        khats.push_back(fit_gpd_tail(x).k_hat);
      }
      CHECK(std::abs(num::median(khats) - k) <= 0.1);
    }
  }
}

TEST_CASE("psis report end to end on a perfect bank") {
  // constant ratios are treated as a perfect approximation
  std::vector<double> lr(1000, -3.7);
  const PsisReport rep = psis_khat_from_log_ratios(lr);
  CHECK(rep.verdict == PsisVerdict::close);
}

TEST_CASE("kl_vs_analytic closed forms") {
  SUBCASE("KL(p || p) vanishes") {
    const VariationalFamily family = VariationalFamily::mean_field(1);
    Rng rng(67);
    double se = 0.0;
    const double kl = kl_vs_analytic(
        family,
        [](std::span<const double> th) { return num::std_normal_lpdf(th[0]); },
        4000, rng, &se);
    CHECK(std::abs(kl) <= 3.0 * se + 1e-12);
  }
  SUBCASE("KL(N(0,1) || N(1,1)) = 1/2") {
    const VariationalFamily family = VariationalFamily::mean_field(1);
    Rng rng(68);
    double se = 0.0;
    const double kl = kl_vs_analytic(
        family,
        [](std::span<const double> th) {
          return num::normal_lpdf(th[0], 1.0, 1.0);
        },
        20000, rng, &se);
    CHECK(kl == doctest::Approx(0.5).epsilon(0.05));
    CHECK(std::abs(kl - 0.5) <= 3.0 * se);
  }
}

TEST_CASE("the two KL estimators agree on the conjugate model") {
  const ProbabilisticModel model = bernoulli_beta_model();
  const BetaDistribution post =
      analytic_beta_posterior(1.1, 1.1, model.data->col("y"));
  const VariationalFamily family = VariationalFamily::bernstein_1d(10);
  Rng rng_a(69), rng_b(70);
  double se_a = 0.0, se_b = 0.0;
  const double kl_a = kl_vs_analytic(
      family,
      [&](std::span<const double> th) {
        return post.log_pdf_unconstrained(th[0]);
      },
      20000, rng_a, &se_a);
  const double kl_b = kl_via_evidence(family, model,
                                      *model.analytic_log_evidence, 20000,
                                      rng_b, &se_b);
  CHECK(std::abs(kl_a - kl_b) <= 3.0 * (se_a + se_b));
  SUBCASE("and both are non-negative up to MC noise") {
    CHECK(kl_a >= -3.0 * se_a);
    CHECK(kl_b >= -3.0 * se_b);
  }
}

TEST_CASE("evidence quadrature") {
  SUBCASE("cauchy evidence matches the published value") {
    const ProbabilisticModel m = cauchy_model();
    const double log_z = log_evidence_quadrature_1d(m, -15.0, 15.0, 2048);
    CHECK(log_z == doctest::Approx(-21.43069).epsilon(1e-3 / 21.43));
    CHECK(std::abs(log_z + 21.43069) <= 1e-3);
  }
  SUBCASE("bernoulli evidence matches the beta-function identity") {
    const ProbabilisticModel m = bernoulli_beta_model();
    const double log_z = log_evidence_quadrature_1d(m, -16.0, 26.0, 2048);
    const double want =
        num::log_beta_fn(3.1, 1.1) - num::log_beta_fn(1.1, 1.1);
    CHECK(log_z == doctest::Approx(want).epsilon(1e-6));
  }
  SUBCASE("doubling nodes changes nothing") {
    const ProbabilisticModel m = cauchy_model();
    const double a = log_evidence_quadrature_1d(m, -15.0, 15.0, 1024);
    const double b = log_evidence_quadrature_1d(m, -15.0, 15.0, 2048);
    CHECK(std::abs(a - b) <= 1e-8);
  }
  SUBCASE("an interval that clips posterior mass is rejected") {
    const ProbabilisticModel m = cauchy_model();
    CHECK_THROWS_AS((void)log_evidence_quadrature_1d(m, -1.0, 1.0, 512),
                    IntervalError);
  }
}

TEST_CASE("kde finds well-separated modes") {
  Rng rng(71);
  std::vector<double> samples;
  for (int i = 0; i < 2000; ++i) {
    samples.push_back((i % 2 == 0 ? -2.5 : 2.5) + 0.4 * rng.normal());
  }
  std::vector<double> grid;
  for (double x = -6.0; x <= 6.0; x += 0.02) grid.push_back(x);
  const std::vector<double> dens = kde_gaussian(samples, grid, 0.2);
  const std::vector<std::size_t> peaks = prominent_maxima(dens, 0.05);
  REQUIRE(peaks.size() == 2);
  CHECK(std::abs(grid[peaks[0]] + 2.5) < 0.5);
  CHECK(std::abs(grid[peaks[1]] - 2.5) < 0.5);

  SUBCASE("low-prominence wiggles are not modes") {
    // a flat-ish shelf with tiny bumps plus one dominant peak
    std::vector<double> shelf(400, 0.1);
    shelf[50] = 0.102;
    shelf[150] = 0.103;
    shelf[300] = 1.0;
    shelf[299] = 0.6;
    shelf[301] = 0.6;
    const auto modes = prominent_maxima(shelf, 0.05);
    REQUIRE(modes.size() == 1);
    CHECK(modes[0] == 300);
  }
}
