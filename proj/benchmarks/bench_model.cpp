#include <random>

#include <benchmark/benchmark.h>

#include "sdlpgc/autograd.hpp"
#include "sdlpgc/model.hpp"
#include "sdlpgc/ops.hpp"
#include "sdlpgc/training.hpp"

namespace {

sdlpgc::ModelConfig config(std::size_t nodes) {
    sdlpgc::ModelConfig c;
    c.num_nodes = nodes;
    return c;
}

sdlpgc::Tensor random_window(std::size_t batch, std::size_t nodes, std::size_t len) {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> dist;
    sdlpgc::Tensor t({batch, 1, nodes, len});
    for (auto& x : t.values()) x = dist(rng);
    return t;
}

void BM_Predict(benchmark::State& state) {
    const auto nodes = static_cast<std::size_t>(state.range(0));
    sdlpgc::SDLPGCModel model(config(nodes));
    const auto window = random_window(8, nodes, 12);
    for (auto _ : state) benchmark::DoNotOptimize(model.predict(window));
}
BENCHMARK(BM_Predict)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
    const auto nodes = static_cast<std::size_t>(state.range(0));
    sdlpgc::SDLPGCModel model(config(nodes));
    sdlpgc::Adam adam(model.params());
    std::mt19937_64 rng(1);
    const sdlpgc::nn::ForwardContext ctx{true, &rng};
    const sdlpgc::ag::Var window(random_window(8, nodes, 12));
    const sdlpgc::ag::Var target(random_window(8, 12, nodes).reshaped({8, 12, nodes}));
    for (auto _ : state) {
        model.params().zero_grad();
        auto loss = sdlpgc::loss(model.forward(window, ctx), target);
        sdlpgc::ag::backward(loss);
        sdlpgc::clip_grad_norm(model.params(), 5.0);
        adam.step();
    }
}
BENCHMARK(BM_TrainStep)->Arg(16)->Unit(benchmark::kMillisecond);

void BM_NodeMix(benchmark::State& state) {
    const auto nodes = static_cast<std::size_t>(state.range(0));
    sdlpgc::ag::NoGradGuard guard;
    const sdlpgc::ag::Var adj(sdlpgc::Tensor({8, nodes, nodes}, 1.0 / static_cast<double>(nodes)));
    const sdlpgc::ag::Var z(random_window(8, nodes, 32 * 7).reshaped({8, 32, nodes, 7}));
    for (auto _ : state) benchmark::DoNotOptimize(sdlpgc::ag::node_mix(adj, z));
}
BENCHMARK(BM_NodeMix)->Arg(64)->Arg(256)->Unit(benchmark::kMicrosecond);

}  // namespace

BENCHMARK_MAIN();
