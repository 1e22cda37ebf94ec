#include <benchmark/benchmark.h>

#include <vector>

#include "bfvi/bernstein.hpp"
#include "bfvi/maf.hpp"
#include "bfvi/rng.hpp"
#include "bfvi/sandwich_flow.hpp"

namespace {

void BM_BernsteinBasis(benchmark::State& state) {
  const int order = static_cast<int>(state.range(0));
  std::vector<double> out(static_cast<std::size_t>(order) + 1);
  double z = 0.001;
  for (auto _ : state) {
    z += 1e-5;
    if (z > 0.999) z = 0.001;
    bfvi::bernstein_basis(order, z, out);
    benchmark::DoNotOptimize(out.data());
  }
}
BENCHMARK(BM_BernsteinBasis)->Arg(10)->Arg(50)->Arg(256);

void BM_SandwichForward(benchmark::State& state) {
  const int order = static_cast<int>(state.range(0));
  const bfvi::SandwichFlow flow = bfvi::SandwichFlow::ramp_init(order);
  bfvi::Rng rng(7);
  for (auto _ : state) {
    const bfvi::FlowOutput out = flow.forward(rng.normal());
    benchmark::DoNotOptimize(out.theta);
  }
}
BENCHMARK(BM_SandwichForward)->Arg(10)->Arg(50);

void BM_MafForward(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  bfvi::MultivariateBernsteinFlow flow(dim, 50);
  flow.init_ramp(3);
  bfvi::Rng rng(7);
  std::vector<double> z(static_cast<std::size_t>(dim));
  for (auto _ : state) {
    for (double& v : z) v = rng.normal();
    const bfvi::MvOutput out = flow.forward(z);
    benchmark::DoNotOptimize(out.log_det);
  }
}
BENCHMARK(BM_MafForward)->Arg(4)->Arg(10)->Arg(26);

}  // namespace

BENCHMARK_MAIN();
