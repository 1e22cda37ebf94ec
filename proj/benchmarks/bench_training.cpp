#include <benchmark/benchmark.h>

#include "bfvi/models.hpp"
#include "bfvi/vi.hpp"

namespace {

// One full gradient step (tape build + backward + RMSprop-sized work) for the
// configurations that dominate the benchmark suite's wall time.
void BM_TrainStep(benchmark::State& state, const char* which) {
  using namespace bfvi;
  ProbabilisticModel model =
      std::string(which) == "bernoulli"
          ? bernoulli_beta_model()
          : [] {
              Dataset d;
              d.add_column("y", {28, 8, -3, 7, -1, 1, 18, 12});
              d.add_column("sigma", {15, 10, 16, 11, 9, 11, 10, 18});
              return eight_schools_model(EightSchoolsParam::non_centered,
                                         std::move(d));
            }();
  TrainConfig cfg;
  cfg.order = std::string(which) == "bernoulli" ? 10 : 50;
  cfg.mc_samples = std::string(which) == "bernoulli" ? 1000 : 10;
  cfg.epochs = 1;
  cfg.seed = 11;
  for (auto _ : state) {
    const FitResult fit = train(model, FamilyKind::bernstein_flow, cfg);
    benchmark::DoNotOptimize(fit.elbo_trace.back());
  }
}
BENCHMARK_CAPTURE(BM_TrainStep, bernoulli_m10_s1000, "bernoulli");
BENCHMARK_CAPTURE(BM_TrainStep, eight_schools_m50_s10, "eight_schools");

}  // namespace
