#include "paglab/autodiff.hpp"
#include "paglab/losses.hpp"
#include "paglab/mlp.hpp"

#include <benchmark/benchmark.h>

using namespace paglab;

namespace {

const Tensor kInput({2}, {12.5, 25.0});
const std::vector<Tensor> kTargets{Tensor({2}, {1.0, 2.0}), Tensor({2}, {-1.0, -2.0})};

void BM_VanillaExampleGradient(benchmark::State& state) {
    MlpModel model = init_mlp({2, 32, 2}, 0);
    for (auto _ : state) {
        Tape tape;
        ModelNodes nodes = record_mlp(tape, model, kInput);
        NodeId loss = cross_entropy(tape, nodes.logits, 0);
        auto grads = tape.gradients(loss, nodes.parameter_nodes());
        benchmark::DoNotOptimize(grads);
    }
}
BENCHMARK(BM_VanillaExampleGradient);

void BM_PagExampleGradient(benchmark::State& state) {
    MlpModel model = init_mlp({2, 32, 2}, 0);
    PagLossConfig cfg{0.4, 1e-8, 2};
    for (auto _ : state) {
        Tape tape;
        PagLossGraph g = pag_total_loss(tape, model, kInput, 0, kTargets, cfg);
        auto grads = tape.gradients(g.total, g.model.parameter_nodes());
        benchmark::DoNotOptimize(grads);
    }
}
BENCHMARK(BM_PagExampleGradient);

void BM_TapeReplay(benchmark::State& state) {
    MlpModel model = init_mlp({2, 32, 2}, 0);
    Tape tape;
    ModelNodes nodes = record_mlp(tape, model, kInput);
    cross_entropy(tape, nodes.logits, 0);
    for (auto _ : state) {
        tape.set_leaf(nodes.input, kInput);
        tape.replay();
        benchmark::DoNotOptimize(tape.value(static_cast<NodeId>(tape.size() - 1)));
    }
}
BENCHMARK(BM_TapeReplay);

} // namespace
