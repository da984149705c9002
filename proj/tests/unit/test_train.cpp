#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fixtures.hpp"
#include "nestfuse/checkpoint.hpp"
#include "nestfuse/error.hpp"
#include "nestfuse/synthetic.hpp"
#include "nestfuse/train.hpp"

using namespace nestfuse;
using namespace nestfuse::testing;

namespace {

ModelConfig small_config() {
    ModelConfig cfg;
    cfg.encoder_depth = 1;
    cfg.encoder_hidden = 16;
    cfg.decoder_depth = 1;
    cfg.decoder_width = 16;
    cfg.aggregate_depth = 1;
    cfg.aggregate_width = 8;
    cfg.heads = 2;
    cfg.seed = 2;
    return cfg;
}

MultiScaleDataset small_synthetic() {
    SynthConfig cfg;
    cfg.width = cfg.height = 24;
    cfg.base_dim = 6;
    cfg.parent_dim = 4;
    cfg.classes = 3;
    return generate_synthetic(cfg).dataset;
}

}  // namespace

TEST_CASE("training twice gives identical loss histories and parameters") {
    const auto ds = small_synthetic();
    OptimizerConfig opt;
    opt.steps = 15;
    opt.batch_size = 3;
    opt.seed = 4;
    const auto a = train_nested_fusion(ds, small_config(), opt);
    const auto b = train_nested_fusion(ds, small_config(), opt);
    CHECK(a.history.to_csv() == b.history.to_csv());
    CHECK(encode_checkpoint(to_checkpoint(a.model)) == encode_checkpoint(to_checkpoint(b.model)));
    CHECK(a.history.records.size() == 15);
    CHECK(a.history.term_names == std::vector<std::string>{"nll_aggregate", "nll_base", "kl"});
    for (const auto &r : a.history.records) {
        REQUIRE(r.terms.size() == 3);
        CHECK(r.total == doctest::Approx(r.terms[0] + r.terms[1] + r.terms[2]).epsilon(1e-12));
    }

    opt.seed = 5;
    const auto c = train_nested_fusion(ds, small_config(), opt);
    CHECK(c.history.to_csv() != a.history.to_csv());
}

TEST_CASE("zero steps return the initialization") {
    const auto ds = small_synthetic();
    OptimizerConfig opt;
    opt.steps = 0;
    const auto r = train_nested_fusion(ds, small_config(), opt);
    CHECK(r.history.records.empty());
    auto init = NestedFusionModel::for_dataset(ds, small_config());
    init.params().round_to_float();
    for (std::size_t i = 0; i < init.params().count(); ++i) CHECK(r.model.params()[i].value == init.params()[i].value);
}

TEST_CASE("the smoothed loss decreases during training") {
    const auto ds = small_synthetic();
    OptimizerConfig opt;
    opt.steps = 300;
    opt.batch_size = 4;
    const auto r = train_nested_fusion(ds, small_config(), opt);
    const double start = r.history.moving_average(50, 50);
    const double end = r.history.moving_average(300, 50);
    CHECK(end < start);
}

TEST_CASE("loss history csv and moving average") {
    LossHistory h;
    h.term_names = {"a"};
    for (std::size_t i = 0; i < 5; ++i) h.records.push_back({i, double(i) + 0.5, {double(i)}});
    CHECK(h.to_csv().substr(0, 13) == "step,total,a\n");
    CHECK(h.to_csv().find("\n4,4.5,4\n") != std::string::npos);
    CHECK(h.moving_average(5, 2) == 4.0);  // (3.5 + 4.5) / 2
    CHECK(h.moving_average(2, 10) == 1.0);
    CHECK(std::isnan(h.moving_average(0, 3)));
}

TEST_CASE("a non-finite loss aborts with the history so far") {
    ad::ParamStore store;
    store.add("w", 1, 1, ad::Init::kOnes);
    OptimizerConfig opt;
    opt.steps = 10;
    opt.batch_size = 1;
    std::size_t calls = 0;
    try {
        train_loop(store, opt, 4, {"x"}, [&](ad::Tape &t, std::span<const std::size_t>, std::mt19937_64 &) {
            const double s = ++calls == 4 ? NAN : 1.0;
            ad::Var w = t.param(store, 0);
            ad::Var loss = ad::scale(ad::sum(ad::square(w)), s);
            return std::vector<ad::Var>{loss, loss};
        });
        FAIL("expected divergence");
    } catch (const TrainingDiverged &e) {
        CHECK(e.kind() == ErrorKind::kTraining);
        CHECK(e.history().records.size() == 3);
        CHECK(std::string(e.what()).find("step 3") != std::string::npos);
    }
}

TEST_CASE("each epoch visits every item once") {
    ad::ParamStore store;
    store.add("w", 1, 1, ad::Init::kOnes);
    OptimizerConfig opt;
    opt.steps = 6;
    opt.batch_size = 2;
    std::vector<std::size_t> seen;
    train_loop(store, opt, 4, {}, [&](ad::Tape &t, std::span<const std::size_t> batch, std::mt19937_64 &) {
        seen.insert(seen.end(), batch.begin(), batch.end());
        return std::vector<ad::Var>{ad::sum(ad::square(t.param(store, 0)))};
    });
    REQUIRE(seen.size() == 12);
    for (std::size_t epoch = 0; epoch < 3; ++epoch) {
        std::vector<std::size_t> part(seen.begin() + long(epoch * 4), seen.begin() + long(epoch * 4 + 4));
        std::sort(part.begin(), part.end());
        CHECK(part == std::vector<std::size_t>{0, 1, 2, 3});
    }
}

TEST_CASE("training refuses invalid datasets") {
    CHECK_THROWS_AS(train_nested_fusion(two_level({{}}, 2), small_config(), {}), Error);
}
