#include "paglab/attacks.hpp"
#include "paglab/dataset.hpp"
#include "paglab/mlp.hpp"

#include <benchmark/benchmark.h>

using namespace paglab;

namespace {

void BM_Pgd10StepL2(benchmark::State& state) {
    MlpModel model = init_mlp({2, 32, 2}, 0);
    Tensor x({2}, {-10.3, -20.6});
    ThreatModel threat{NormKind::l2, 15.0, std::nullopt};
    PgdConfig cfg;
    cfg.steps = 10;
    cfg.step_size = 2.0;
    for (auto _ : state) {
        Tensor adv = pgd(model, x, 0, cfg, threat);
        benchmark::DoNotOptimize(adv);
    }
}
BENCHMARK(BM_Pgd10StepL2);

void BM_RobustAccuracyToyTest(benchmark::State& state) {
    MlpModel model = init_mlp({2, 32, 2}, 0);
    ToySplits toy = toy_generate(0);
    ThreatModel threat{NormKind::l2, 15.0, std::nullopt};
    PgdConfig cfg;
    cfg.steps = 10;
    cfg.step_size = 2.0;
    for (auto _ : state) {
        benchmark::DoNotOptimize(robust_accuracy(model, toy.test, cfg, threat));
    }
}
BENCHMARK(BM_RobustAccuracyToyTest);

} // namespace

BENCHMARK_MAIN();
