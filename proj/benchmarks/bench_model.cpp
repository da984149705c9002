#include <benchmark/benchmark.h>

#include <random>

#include "nestfuse/layers.hpp"
#include "nestfuse/model.hpp"
#include "nestfuse/synthetic.hpp"

using namespace nestfuse;

namespace {

const SyntheticDataset &synth() {
    static const SyntheticDataset s = generate_synthetic(SynthConfig{});
    return s;
}

void BM_AttentionForward(benchmark::State &state) {
    const auto tokens = Eigen::Index(state.range(0));
    ad::ParamStore store(1);
    ad::AttentionBlock block(store, "attn", 24, 4, 64);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> unit(0.0, 1.0);
    ad::Mat x(tokens, 24);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = unit(rng);
    for (auto _ : state) {
        ad::Tape t(false);
        benchmark::DoNotOptimize(block.forward(t, store, t.constant(x)).value().data());
    }
    state.SetItemsProcessed(state.iterations() * tokens);
}
BENCHMARK(BM_AttentionForward)->Arg(16)->Arg(82)->Arg(256);

void BM_AttentionBackward(benchmark::State &state) {
    const auto tokens = Eigen::Index(state.range(0));
    ad::ParamStore store(1);
    ad::AttentionBlock block(store, "attn", 24, 4, 64);
    std::mt19937_64 rng(2);
    std::normal_distribution<double> unit(0.0, 1.0);
    ad::Mat x(tokens, 24);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = unit(rng);
    for (auto _ : state) {
        store.zero_grad();
        ad::Tape t;
        const auto y = ad::sum(block.forward(t, store, t.constant(x)));
        t.backward(y);
    }
    state.SetItemsProcessed(state.iterations() * tokens);
}
BENCHMARK(BM_AttentionBackward)->Arg(82);

void BM_EncodeGroup(benchmark::State &state) {
    const auto &ds = synth().dataset;
    const auto model = NestedFusionModel::for_dataset(ds, ModelConfig{});
    const auto group = make_group(ds, 24);
    for (auto _ : state) benchmark::DoNotOptimize(model.encode(group));
    state.SetItemsProcessed(state.iterations() * std::int64_t(group.base_positions().size()));
}
BENCHMARK(BM_EncodeGroup);

void BM_EncodeDataset(benchmark::State &state) {
    const auto &ds = synth().dataset;
    const auto model = NestedFusionModel::for_dataset(ds, ModelConfig{});
    for (auto _ : state) benchmark::DoNotOptimize(encode_dataset(ds, model));
    state.SetItemsProcessed(state.iterations() * std::int64_t(ds.base().size()));
}
BENCHMARK(BM_EncodeDataset)->Unit(benchmark::kMillisecond);

void BM_ElboStep(benchmark::State &state) {
    const auto &ds = synth().dataset;
    auto model = NestedFusionModel::for_dataset(ds, ModelConfig{});
    const auto g = model.prepare(make_group(ds, 24));
    std::mt19937_64 rng(3);
    std::normal_distribution<double> unit(0.0, 1.0);
    ad::Mat eps(Eigen::Index(g.base_positions.size()), 2);
    for (Eigen::Index i = 0; i < eps.size(); ++i) eps.data()[i] = unit(rng);
    for (auto _ : state) {
        model.params().zero_grad();
        ad::Tape t;
        const auto e = model.elbo_graph(t, g, eps);
        t.backward(e.total);
    }
}
BENCHMARK(BM_ElboStep);

}  // namespace
