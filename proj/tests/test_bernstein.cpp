#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "bfvi/bernstein.hpp"
#include "bfvi/math.hpp"
#include "bfvi/rng.hpp"
#include "test_util.hpp"

using namespace bfvi;

TEST_CASE("beta basis density closed forms") {
  // Beta(1,3) at 0: 3(1-z)^2 -> 3
  CHECK(beta_basis_density(0, 2, 0.0) == doctest::Approx(3.0).epsilon(1e-12));
  // Beta(2,2) at 1/2: 6 z (1-z) -> 1.5
  CHECK(beta_basis_density(1, 2, 0.5) == doctest::Approx(1.5).epsilon(1e-12));
  // Beta(6,1) at 1: 6 z^5 -> 6
  CHECK(beta_basis_density(5, 5, 1.0) == doctest::Approx(6.0).epsilon(1e-12));
}

TEST_CASE("beta basis density domain errors") {
  CHECK_THROWS_AS((void)beta_basis_density(3, 2, 0.5), std::domain_error);
  CHECK_THROWS_AS((void)beta_basis_density(-1, 2, 0.5), std::domain_error);
  CHECK_THROWS_AS((void)beta_basis_density(0, 2, -0.01), std::domain_error);
  CHECK_THROWS_AS((void)beta_basis_density(0, 2, 1.01), std::domain_error);
}

TEST_CASE("partition of unity across orders") {
  Rng rng(3);
  for (int order : {1, 2, 5, 10, 50, 256}) {
    for (int rep = 0; rep < 25; ++rep) {
      const double z = rng.uniform01();
      double acc = 0.0;
      for (int i = 0; i <= order; ++i) {
        acc += beta_basis_density(i, order, z) / (order + 1);
      }
      CHECK(std::abs(acc - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("reparam examples") {
  SUBCASE("zeros map to a log-2 ladder") {
    const std::vector<double> raw = {0.0, 0.0, 0.0};
    const auto out = reparam_coefficients(raw);
    CHECK(out[0] == 0.0);
    CHECK(out[1] == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    CHECK(out[2] == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-15));
  }
  SUBCASE("single coefficient is identity") {
    const std::vector<double> raw = {-5.0};
    const auto out = reparam_coefficients(raw);
    CHECK(out[0] == -5.0);
  }
  SUBCASE("large negative raws still strictly increase") {
    const std::vector<double> raw = {1.0, -20.0, -20.0};
    const auto out = reparam_coefficients(raw);
    CHECK(out[1] > out[0]);
    CHECK(out[2] > out[1]);
    CHECK(out[1] - out[0] < 1e-8);
    CHECK(out[1] - out[0] > 0.0);
  }
  SUBCASE("strict increase survives extreme underflow") {
    const std::vector<double> raw = {1.0, -1000.0, -1000.0};
    const auto out = reparam_coefficients(raw);
    CHECK(out[1] > out[0]);
    CHECK(out[2] > out[1]);
  }
  SUBCASE("non-finite input throws") {
    const std::vector<double> raw = {0.0, std::nan("")};
    CHECK_THROWS_AS((void)reparam_coefficients(raw), std::invalid_argument);
  }
}

TEST_CASE("bp_forward partition, linear precision, boundaries") {
  SUBCASE("equal coefficients give a constant map") {
    const std::vector<double> derived = {2.5, 2.5, 2.5, 2.5};
    Rng rng(4);
    for (int rep = 0; rep < 10; ++rep) {
      CHECK(bp_forward(derived, rng.uniform01()) ==
            doctest::Approx(2.5).epsilon(1e-13));
    }
  }
  SUBCASE("ramp coefficients reproduce the identity") {
    const int m = 7;
    std::vector<double> derived(m + 1);
    for (int i = 0; i <= m; ++i) derived[static_cast<std::size_t>(i)] =
        static_cast<double>(i) / m;
    Rng rng(5);
    for (int rep = 0; rep < 20; ++rep) {
      const double z = rng.uniform01();
      CHECK(bp_forward(derived, z) == doctest::Approx(z).epsilon(1e-12));
    }
  }
  SUBCASE("boundary interpolation") {
    BernsteinCoefficients coeffs(
        {-2.0, num::softplus_inv(2.0), num::softplus_inv(5.0)});
    CHECK(coeffs.derived()[0] == -2.0);
    CHECK(bp_forward(coeffs, 0.0) == doctest::Approx(-2.0).epsilon(1e-12));
    CHECK(bp_forward(coeffs, 1.0) ==
          doctest::Approx(coeffs.derived().back()).epsilon(1e-12));
    CHECK_THROWS_AS((void)bp_forward(coeffs, 1.5), std::domain_error);
  }
}

TEST_CASE("bp_derivative closed forms and FD oracle") {
  SUBCASE("identity has unit derivative") {
    const int m = 6;
    std::vector<double> derived(m + 1);
    for (int i = 0; i <= m; ++i) derived[static_cast<std::size_t>(i)] =
        static_cast<double>(i) / m;
    Rng rng(6);
    for (int rep = 0; rep < 10; ++rep) {
      CHECK(bp_derivative(derived, rng.uniform01()) ==
            doctest::Approx(1.0).epsilon(1e-12));
    }
  }
  SUBCASE("constant map has zero derivative") {
    const std::vector<double> derived = {1.0, 1.0, 1.0};
    CHECK(bp_derivative(derived, 0.3) == doctest::Approx(0.0));
  }
  SUBCASE("matches central differences at z=0.37") {
    Rng rng(7);
    for (int rep = 0; rep < 30; ++rep) {
      std::vector<double> raw(11);
      raw[0] = rng.normal();
      for (std::size_t i = 1; i < raw.size(); ++i) raw[i] = rng.normal();
      BernsteinCoefficients coeffs(raw);
      const double z = 0.37;
      const double got = bp_derivative(coeffs, z);
      const double fd = test::central_diff(
          [&](double v) { return bp_forward(coeffs, v); }, z, 1e-6);
      CHECK(std::abs(got - fd) <= 1e-6 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("second derivative matches FD of the derivative") {
  Rng rng(8);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> raw(9);
    raw[0] = rng.normal();
    for (std::size_t i = 1; i < raw.size(); ++i) raw[i] = rng.normal();
    BernsteinCoefficients coeffs(raw);
    const double z = 0.2 + 0.6 * rng.uniform01();
    const double got = bp_second_derivative(coeffs.derived(), z);
    const double fd = test::central_diff(
        [&](double v) { return bp_derivative(coeffs, v); }, z, 1e-6);
    CHECK(std::abs(got - fd) <= 1e-5 * std::max(1.0, std::abs(fd)));
  }
}

TEST_CASE("traced evaluation agrees with the double path and FD") {
  Rng rng(9);
  const int m = 12;
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> raw(static_cast<std::size_t>(m) + 1);
    raw[0] = rng.normal();
    for (std::size_t i = 1; i < raw.size(); ++i) raw[i] = 0.7 * rng.normal();
    const double v = 0.05 + 0.9 * rng.uniform01();
    BernsteinCoefficients coeffs(raw);

    ad::Tape t;
    std::vector<ad::Var> raw_vars;
    for (double r : raw) raw_vars.push_back(ad::make_leaf(t, r));
    const BpTraced out = bp_eval_from_raw_traced(raw_vars, v);
    CHECK(out.value.value() ==
          doctest::Approx(bp_forward(coeffs, v)).epsilon(1e-13));
    CHECK(out.log_deriv.value() ==
          doctest::Approx(std::log(bp_derivative(coeffs, v))).epsilon(1e-13));

    // parameter partials of the fused pair vs finite differences
    ad::Var mix = out.value + 0.5 * out.log_deriv;
    const std::vector<double> g = ad::grad(t, mix, raw_vars);
    const auto fd = test::fd_gradient(
        [&](std::span<const double> r) {
          BernsteinCoefficients c(std::vector<double>(r.begin(), r.end()));
          return bp_forward(c, v) + 0.5 * std::log(bp_derivative(c, v));
        },
        raw);
    for (std::size_t i = 0; i < raw.size(); ++i) {
      CAPTURE(i);
      CHECK(test::grad_close(g[i], fd[i]));
    }
  }
}
