#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "nestfuse/viz_export.hpp"
#include "nestfuse/wasserstein.hpp"

using namespace nestfuse;

namespace {

ad::Mat gaussian(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> unit(0.0, 1.0);
    ad::Mat m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = unit(rng);
    return m;
}

void BM_Wasserstein1d(benchmark::State &state) {
    const auto n = Eigen::Index(state.range(0));
    const ad::Mat a = gaussian(n, 1, 1), b = gaussian(n + 7, 1, 2);
    const std::vector<double> va(a.data(), a.data() + a.size()), vb(b.data(), b.data() + b.size());
    for (auto _ : state) benchmark::DoNotOptimize(wasserstein_1d(va, vb));
    state.SetItemsProcessed(state.iterations() * (2 * n + 7));
}
BENCHMARK(BM_Wasserstein1d)->Arg(1000)->Arg(100000);

void BM_SlicedWasserstein(benchmark::State &state) {
    const auto n = Eigen::Index(state.range(0));
    const ad::Mat a = gaussian(n, 2, 1), b = gaussian(n, 2, 2);
    for (auto _ : state) benchmark::DoNotOptimize(sliced_wasserstein(a, b, kDefaultProjections, 0));
    state.SetItemsProcessed(state.iterations() * 2 * n);
}
BENCHMARK(BM_SlicedWasserstein)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond);

void BM_Heatmap(benchmark::State &state) {
    const auto n = Eigen::Index(state.range(0));
    const ad::Mat z = gaussian(n, 2, 3);
    for (auto _ : state) benchmark::DoNotOptimize(latent_heatmap(z, kDefaultHeatmapBins));
    state.SetItemsProcessed(state.iterations() * n);
}
BENCHMARK(BM_Heatmap)->Arg(4096)->Arg(100000);

}  // namespace
