#include <benchmark/benchmark.h>

#include <random>

#include "fairlm/model.hpp"
#include "fairlm/tensor.hpp"

using namespace fairlm;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    std::size_t n = 1;
    for (auto d : shape) n *= d;
    std::vector<real> v(n);
    for (auto& x : v) x = dist(rng);
    return Tensor(std::move(shape), std::move(v));
}

void BM_matmul(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    Tensor a = random_tensor({n, n}, 1);
    Tensor b = random_tensor({n, n}, 2);
    NoGradGuard ng;
    for (auto _ : state) {
        Tensor c = matmul(a, b);
        benchmark::DoNotOptimize(c.values().data());
    }
    state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(BM_matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_forward_batch(benchmark::State& state) {
    ModelConfig cfg;
    cfg.vocab_size = 180;
    cfg.seed = 7;
    TransformerLM model(cfg);
    std::vector<std::vector<int>> seqs;
    for (int b = 0; b < static_cast<int>(state.range(0)); ++b)
        seqs.push_back({2, 10, 20, 30, 40, 50, 3});
    NoGradGuard ng;
    for (auto _ : state) {
        Tensor out = model.forward_batch(seqs);
        benchmark::DoNotOptimize(out.values().data());
    }
    state.SetItemsProcessed(state.iterations() * seqs.size());
}
BENCHMARK(BM_forward_batch)->Arg(1)->Arg(8)->Arg(32);

void BM_train_step(benchmark::State& state) {
    ModelConfig cfg;
    cfg.vocab_size = 180;
    cfg.seed = 7;
    TransformerLM model(cfg);
    std::vector<std::vector<int>> seqs;
    std::vector<int> targets;
    for (int b = 0; b < 32; ++b) {
        seqs.push_back({2, 10, 20, 30, 40, 50, 3});
        for (int t : {10, 20, 30, 40, 50, 3}) targets.push_back(t);
        targets.push_back(kIgnoreTarget);
    }
    for (auto _ : state) {
        model.zero_grad();
        Tensor loss = cross_entropy(model.forward_batch(seqs), targets);
        backward(loss);
        benchmark::DoNotOptimize(loss.item());
    }
    state.SetItemsProcessed(state.iterations() * seqs.size());
}
BENCHMARK(BM_train_step);

}  // namespace

BENCHMARK_MAIN();
