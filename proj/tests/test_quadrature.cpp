#include <doctest.h>

#include <cmath>

#include "bfvi/math.hpp"
#include "bfvi/quadrature.hpp"

using namespace bfvi;

TEST_CASE("gauss-legendre integrates polynomials exactly") {
  const double got = integrate([](double x) { return x * x; }, 0.0, 1.0, 16);
  CHECK(got == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
  const double cubic =
      integrate([](double x) { return 2.0 * x * x * x - x; }, -1.0, 2.0, 8);
  CHECK(cubic == doctest::Approx(6.0).epsilon(1e-13));
}

TEST_CASE("log-domain integration of a gaussian density") {
  const double log_mass = integrate_log(
      [](double x) { return num::std_normal_lpdf(x); }, -10.0, 10.0, 256);
  CHECK(log_mass == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("node doubling is converged on smooth integrands") {
  auto f = [](double x) { return num::normal_lpdf(x, 0.7, 1.3); };
  const double a = integrate_log(f, -12.0, 12.0, 1024);
  const double b = integrate_log(f, -12.0, 12.0, 2048);
  CHECK(std::abs(a - b) <= 1e-8);
}

TEST_CASE("rule cache returns symmetric nodes and positive weights") {
  const QuadratureRule& rule = gauss_legendre(33);
  REQUIRE(rule.nodes.size() == 33);
  for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
    CHECK(rule.weights[i] > 0.0);
    CHECK(rule.nodes[i] ==
          doctest::Approx(-rule.nodes[rule.nodes.size() - 1 - i]).epsilon(1e-12));
  }
  double total = 0.0;
  for (double w : rule.weights) total += w;
  CHECK(total == doctest::Approx(2.0).epsilon(1e-13));
}
