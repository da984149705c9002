#include <doctest.h>

#include <cmath>
#include <random>

#include "nestfuse/error.hpp"
#include "nestfuse/optim.hpp"

using namespace nestfuse;
using namespace nestfuse::ad;

namespace {

// 0.5 * sum(a_i * (x_i - c_i)^2), gradient a_i * (x_i - c_i)
struct Bowl {
    Mat a, c;
    double loss(const Mat &x) const { return 0.5 * (a.array() * (x - c).array().square()).sum(); }
    Mat grad(const Mat &x) const { return (a.array() * (x - c).array()).matrix(); }
};

Bowl make_bowl() {
    Bowl b;
    b.a = Mat(2, 3);
    b.a << 1.0, 2.0, 0.5, 3.0, 1.5, 4.0;
    b.c = Mat(2, 3);
    b.c << 1.0, -2.0, 0.5, 0.0, 3.0, -1.0;
    return b;
}

}  // namespace

TEST_CASE("sgd on a quadratic bowl decreases the loss monotonically") {
    const auto bowl = make_bowl();
    ParamStore store;
    store.add("x", 2, 3, Init::kZeros);
    double prev = bowl.loss(store[0].value);
    for (int step = 0; step < 100; ++step) {
        store[0].grad = bowl.grad(store[0].value);
        sgd_step(store, 0.05);
        const double now = bowl.loss(store[0].value);
        REQUIRE(now < prev);
        prev = now;
    }
}

TEST_CASE("adam on a quadratic bowl decreases the loss monotonically") {
    const auto bowl = make_bowl();
    ParamStore store;
    store.add("x", 2, 3, Init::kZeros);
    Adam adam(store);
    double prev = bowl.loss(store[0].value);
    for (int step = 0; step < 100; ++step) {
        store[0].grad = bowl.grad(store[0].value);
        adam.step(store, 1e-2);
        const double now = bowl.loss(store[0].value);
        REQUIRE(now < prev);
        prev = now;
    }
    CHECK(adam.steps_taken() == 100);
}

TEST_CASE("adam's first step moves every coordinate by the learning rate") {
    ParamStore store;
    store.add("x", 1, 3, Init::kZeros);
    store[0].grad = Mat(1, 3);
    store[0].grad << 4.0, -0.01, 250.0;
    Adam adam(store);
    adam.step(store, 0.1);
    // bias-corrected m / sqrt(v) is sign(g) on the first step
    CHECK(store[0].value(0, 0) == doctest::Approx(-0.1).epsilon(1e-6));
    CHECK(store[0].value(0, 1) == doctest::Approx(0.1).epsilon(1e-4));
    CHECK(store[0].value(0, 2) == doctest::Approx(-0.1).epsilon(1e-6));
}

TEST_CASE("a zero gradient leaves parameters unchanged under sgd") {
    ParamStore store(5);
    store.add("w", 3, 3, Init::kFanInUniform);
    const Mat before = store[0].value;
    store.zero_grad();
    sgd_step(store, 10.0);
    CHECK(store[0].value == before);
}

TEST_CASE("two identical runs give bit-identical trajectories") {
    auto run = [] {
        const auto bowl = make_bowl();
        ParamStore store(77);
        store.add("x", 2, 3, Init::kFanInUniform);
        Adam adam(store);
        std::vector<Mat> traj;
        for (int step = 0; step < 50; ++step) {
            store[0].grad = bowl.grad(store[0].value);
            clip_gradients(store, 1.0);
            adam.step(store, 1e-2);
            traj.push_back(store[0].value);
        }
        return traj;
    };
    CHECK(run() == run());
}

TEST_CASE("gradient clipping rescales to the global norm") {
    ParamStore store;
    store.add("a", 1, 2, Init::kZeros);
    store.add("b", 1, 1, Init::kZeros);
    store[0].grad = Mat(1, 2);
    store[0].grad << 3.0, 0.0;
    store[1].grad = Mat(1, 1);
    store[1].grad << 4.0;
    CHECK(gradient_norm(store) == 5.0);
    CHECK(clip_gradients(store, 1.0) == 5.0);
    CHECK(store[0].grad(0, 0) == doctest::Approx(0.6));
    CHECK(store[1].grad(0, 0) == doctest::Approx(0.8));
    CHECK(clip_gradients(store, 10.0) == doctest::Approx(1.0));
    CHECK(store[1].grad(0, 0) == doctest::Approx(0.8));
}

TEST_CASE("non-finite gradients raise a training error naming the step") {
    ParamStore store;
    store.add("w", 1, 2, Init::kZeros);
    store[0].grad = Mat(1, 2);
    store[0].grad << 1.0, NAN;
    try {
        check_finite_gradients(store, 37);
        FAIL("expected an error");
    } catch (const Error &e) {
        CHECK(e.kind() == ErrorKind::kTraining);
        CHECK(std::string(e.what()).find("step 37") != std::string::npos);
        CHECK(std::string(e.what()).find("'w'") != std::string::npos);
    }
}

TEST_CASE("optimizer config checks") {
    OptimizerConfig cfg;
    CHECK_NOTHROW(check_optimizer_config(cfg));
    cfg.learning_rate = 0.0;
    CHECK_THROWS_AS(check_optimizer_config(cfg), Error);
    cfg = {};
    cfg.clip_norm = -1.0;
    CHECK_THROWS_AS(check_optimizer_config(cfg), Error);
    cfg = {};
    cfg.batch_size = 0;
    CHECK_THROWS_AS(check_optimizer_config(cfg), Error);
}
