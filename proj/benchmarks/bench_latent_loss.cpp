#include <benchmark/benchmark.h>

#include <torch/torch.h>

#include "vvp/latent_loss.hpp"

using namespace vvp::loss;

namespace {

GaussianField make_field(torch::IntArrayRef shape, uint64_t seed) {
    auto gen = torch::make_generator<torch::CPUGeneratorImpl>(seed);
    auto mu = torch::empty(shape).uniform_(-3, 3, gen);
    auto sigma = torch::empty(shape).uniform_(0.2, 5, gen);
    return GaussianField(mu, torch::log(sigma));
}

void bm_kl_elementwise(benchmark::State& state) {
    auto prior = make_field({6, 2, 16, 16, 16}, 1);
    auto posterior = make_field({6, 2, 16, 16, 16}, 2);
    for (auto _ : state) {
        auto out = kl_elementwise(prior, posterior);
        benchmark::DoNotOptimize(out.data_ptr());
    }
    state.SetItemsProcessed(state.iterations() * prior.numel());
}
BENCHMARK(bm_kl_elementwise);

void bm_combined_elementwise(benchmark::State& state) {
    auto prior = make_field({6, 2, 16, 16, 16}, 1);
    auto posterior = make_field({6, 2, 16, 16, 16}, 2);
    for (auto _ : state) {
        auto out = combined_latent_elementwise(prior, posterior);
        benchmark::DoNotOptimize(out.data_ptr());
    }
    state.SetItemsProcessed(state.iterations() * prior.numel());
}
BENCHMARK(bm_combined_elementwise);

void bm_mc_kl_oracle(benchmark::State& state) {
    auto prior = make_field({1, 2, 2, 2}, 1);
    auto posterior = make_field({1, 2, 2, 2}, 2);
    const int64_t n = state.range(0);
    for (auto _ : state) {
        benchmark::DoNotOptimize(mc_kl_oracle(prior, posterior, n, 7));
    }
    state.SetItemsProcessed(state.iterations() * n * prior.numel());
}
BENCHMARK(bm_mc_kl_oracle)->Arg(1000)->Arg(100000);

}  // namespace

BENCHMARK_MAIN();
