#include <doctest.h>

#include <cmath>

#include "bfvi/models.hpp"
#include "bfvi/sandwich_flow.hpp"
#include "bfvi/tape.hpp"
#include "test_util.hpp"

using namespace bfvi;

TEST_CASE("primitive derivatives at known points") {
  ad::Tape t;
  ad::Var x = ad::make_leaf(t, 0.0);

  SUBCASE("softplus'(0) = 0.5") {
    ad::Var y = ad::softplus(x);
    t.backward(y.id);
    CHECK(t.adjoint(x.id) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("sigmoid'(0) = 0.25") {
    ad::Var y = ad::sigmoid(x);
    t.backward(y.id);
    CHECK(t.adjoint(x.id) == doctest::Approx(0.25).epsilon(1e-12));
  }
}

TEST_CASE("product rule: d/dx x*exp(x) at 1 is 2e") {
  ad::Tape t;
  ad::Var x = ad::make_leaf(t, 1.0);
  ad::Var y = x * ad::exp(x);
  t.backward(y.id);
  const double want = 2.0 * std::exp(1.0);
  CHECK(t.adjoint(x.id) == doctest::Approx(want).epsilon(1e-12));
  // cross-check with finite differences
  const double fd = test::central_diff(
      [](double v) { return v * std::exp(v); }, 1.0);
  CHECK(test::grad_close(t.adjoint(x.id), fd));
}

TEST_CASE("quadratic objective gradient is 2*lambda") {
  ad::Tape t;
  Rng rng(5);
  std::vector<ad::Var> xs;
  for (int i = 0; i < 7; ++i) xs.push_back(ad::make_leaf(t, rng.normal()));
  ad::Var obj = xs[0] * xs[0];
  for (std::size_t i = 1; i < xs.size(); ++i) obj = obj + xs[i] * xs[i];
  const std::vector<double> g = ad::grad(t, obj, xs);
  for (std::size_t i = 0; i < xs.size(); ++i) {
    CHECK(g[i] == doctest::Approx(2.0 * xs[i].value()).epsilon(1e-12));
  }
}

TEST_CASE("gradient linearity to 1e-12") {
  Rng rng(17);
  for (int rep = 0; rep < 20; ++rep) {
    const double x0 = rng.normal(), y0 = rng.normal();
    const double a = rng.normal(), b = rng.normal();
    auto grads = [&](double ca, double cb) {
      ad::Tape t;
      ad::Var x = ad::make_leaf(t, x0);
      ad::Var y = ad::make_leaf(t, y0);
      ad::Var f = ad::sigmoid(x * y) + ad::softplus(x);
      ad::Var g = ad::exp(y * 0.3) - x * x;
      ad::Var obj = ca * f + cb * g;
      std::vector<ad::Var> leaves = {x, y};
      return ad::grad(t, obj, leaves);
    };
    const auto gf = grads(1.0, 0.0);
    const auto gg = grads(0.0, 1.0);
    const auto gab = grads(a, b);
    for (int i = 0; i < 2; ++i) {
      CHECK(std::abs(gab[static_cast<std::size_t>(i)] -
                     (a * gf[static_cast<std::size_t>(i)] +
                      b * gg[static_cast<std::size_t>(i)])) < 1e-12);
    }
  }
}

TEST_CASE("identical tapes give bitwise identical gradients") {
  auto run = [] {
    ad::Tape t;
    Rng rng(99);
    std::vector<ad::Var> xs;
    for (int i = 0; i < 5; ++i) xs.push_back(ad::make_leaf(t, rng.normal()));
    ad::Var obj = ad::tanh(xs[0] * xs[1]) / (1.0 + ad::exp(xs[2])) +
                  ad::softplus(xs[3] - xs[4]);
    return ad::grad(t, obj, xs);
  };
  const auto g1 = run();
  const auto g2 = run();
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("disconnected parameter has zero gradient") {
  ad::Tape t;
  ad::Var x = ad::make_leaf(t, 1.5);
  ad::Var unused = ad::make_leaf(t, -2.0);
  ad::Var obj = x * x;
  std::vector<ad::Var> leaves = {x, unused};
  const auto g = ad::grad(t, obj, leaves);
  CHECK(g[1] == 0.0);
  // the output's own adjoint is exactly 1
  CHECK(t.adjoint(obj.id) == 1.0);
}

TEST_CASE("log of non-positive traced value throws") {
  ad::Tape t;
  ad::Var x = ad::make_leaf(t, -0.5);
  CHECK_THROWS_AS((void)ad::log(x), ad::EvalError);
  ad::Var z = ad::make_leaf(t, 0.0);
  CHECK_THROWS_AS((void)ad::log(z), ad::EvalError);
}

TEST_CASE("pow_int values and derivative") {
  ad::Tape t;
  ad::Var x = ad::make_leaf(t, 1.7);
  ad::Var y = ad::pow_int(x, 4);
  CHECK(y.value() == doctest::Approx(std::pow(1.7, 4)).epsilon(1e-12));
  t.backward(y.id);
  CHECK(t.adjoint(x.id) ==
        doctest::Approx(4.0 * std::pow(1.7, 3)).epsilon(1e-12));
}

TEST_CASE("dot and sum primitives") {
  ad::Tape t;
  std::vector<ad::Var> a = {ad::make_leaf(t, 1.0), ad::make_leaf(t, 2.0),
                            ad::make_leaf(t, 3.0)};
  const std::vector<double> w = {0.5, -1.0, 2.0};
  ad::Var d = ad::dot(a, std::span<const double>(w));
  CHECK(d.value() == doctest::Approx(1.0 * 0.5 - 2.0 + 6.0));
  t.backward(d.id);
  for (int i = 0; i < 3; ++i) {
    CHECK(t.adjoint(a[static_cast<std::size_t>(i)].id) ==
          w[static_cast<std::size_t>(i)]);
  }
  ad::Var s = ad::sum(std::span<const ad::Var>(a));
  CHECK(s.value() == doctest::Approx(6.0));
}

TEST_CASE("ParamVector flatten/unflatten round trip is exact") {
  ad::ParamVector pv;
  pv.add_slice("a", 3, 0.25);
  pv.add_slice("b", 2, -1.0);
  pv.slice("a")[1] = 0.1234567890123456789;
  pv.slice("b")[0] = 3e-17;
  const std::vector<double> snapshot = pv.flat();
  auto a = pv.slice("a");
  auto b = pv.slice("b");
  CHECK(a.size() == 3);
  CHECK(b.size() == 2);
  CHECK(a[1] == snapshot[1]);
  CHECK(b[0] == snapshot[3]);
  CHECK(pv.offset_of("b") == 3);
}

TEST_CASE("traced log q of the 1D flow matches finite differences") {
  Rng rng(31);
  for (int rep = 0; rep < 40; ++rep) {
    SandwichFlow flow = test::random_sandwich(rng, 8);
    const std::vector<double> lambda = flow.params();
    const double z = rng.normal();

    ad::Tape t;
    std::vector<ad::Var> leaves;
    for (double v : lambda) leaves.push_back(ad::make_leaf(t, v));
    std::vector<ad::Var> derived =
        reparam_traced(std::span<const ad::Var>(leaves).subspan(4));
    const SandwichFlow::Traced out = SandwichFlow::forward_traced(
        std::span<const ad::Var>(leaves).first(4), derived, z);
    ad::Var log_q = num::std_normal_lpdf(z) - out.log_det;
    const std::vector<double> g = ad::grad(t, log_q, leaves);

    const auto fd = test::fd_gradient(
        [&](std::span<const double> l) {
          return SandwichFlow::from_params(l, 8).log_q(z);
        },
        lambda);
    for (std::size_t i = 0; i < lambda.size(); ++i) {
      CAPTURE(rep);
      CAPTURE(i);
      CHECK(test::grad_close(g[i], fd[i]));
    }
  }
}

TEST_CASE("one-sample ELBO term on the conjugate model matches FD") {
  const ProbabilisticModel model = bernoulli_beta_model();
  Rng rng(77);
  for (int rep = 0; rep < 25; ++rep) {
    SandwichFlow flow = test::random_sandwich(rng, 6);
    const std::vector<double> lambda = flow.params();
    const double z = rng.normal();

    auto objective = [&](std::span<const double> l) {
      const SandwichFlow f = SandwichFlow::from_params(l, 6);
      const FlowOutput out = f.forward(z);
      const double log_q = num::std_normal_lpdf(z) - out.log_det;
      const double th[1] = {out.theta};
      const std::span<const double> theta(th, 1);
      return -(model.log_lik(theta, {}) + model.log_prior(theta) - log_q);
    };

    ad::Tape t;
    std::vector<ad::Var> leaves;
    for (double v : lambda) leaves.push_back(ad::make_leaf(t, v));
    std::vector<ad::Var> derived =
        reparam_traced(std::span<const ad::Var>(leaves).subspan(4));
    const SandwichFlow::Traced out = SandwichFlow::forward_traced(
        std::span<const ad::Var>(leaves).first(4), derived, z);
    ad::Var log_q = num::std_normal_lpdf(z) - out.log_det;
    std::vector<ad::Var> theta = {out.theta};
    ad::Var obj = -(model.log_lik_traced(theta, {}) +
                    model.log_prior_traced(theta) - log_q);
    const std::vector<double> g = ad::grad(t, obj, leaves);
    const auto fd = test::fd_gradient(objective, lambda);
    for (std::size_t i = 0; i < lambda.size(); ++i) {
      CHECK(test::grad_close(g[i], fd[i]));
    }
  }
}
