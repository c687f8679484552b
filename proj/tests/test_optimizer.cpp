#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "pgcr/optimizer.hpp"

using namespace pgcr;

namespace {

ParamGroup single_group(Tensor t, double lr) {
    ParamGroup g;
    g.name = "g";
    g.lr = lr;
    g.group_index = 0;
    g.params.push_back({"p", std::move(t)});
    return g;
}

}  // namespace

TEST_CASE("layer-wise schedule: exact geometric table") {
    // decay 0.5 over 4 groups scales by exact powers of two, so the values
    // must be equal, not merely close.
    CHECK(layer_wise_lr(1e-3, 0.5, 0, 4) == 1.25e-4);
    CHECK(layer_wise_lr(1e-3, 0.5, 1, 4) == 2.5e-4);
    CHECK(layer_wise_lr(1e-3, 0.5, 2, 4) == 5e-4);
    CHECK(layer_wise_lr(1e-3, 0.5, 3, 4) == 1e-3);
}

TEST_CASE("layer-wise schedule: general properties") {
    for (double decay : {0.3, 0.65, 0.75, 0.9}) {
        for (std::size_t n : {std::size_t(1), std::size_t(3), std::size_t(7)}) {
            CHECK(layer_wise_lr(2e-4, decay, n - 1, n) == 2e-4);
            for (std::size_t i = 1; i < n; ++i)
                CHECK(layer_wise_lr(2e-4, decay, i, n) > layer_wise_lr(2e-4, decay, i - 1, n));
        }
    }
    CHECK_THROWS_AS(layer_wise_lr(1e-3, 0.0, 0, 4), UsageError);
    CHECK_THROWS_AS(layer_wise_lr(1e-3, -0.5, 0, 4), UsageError);
    CHECK_THROWS_AS(layer_wise_lr(1e-3, 0.5, 4, 4), UsageError);
}

TEST_CASE("first Adam step moves each coordinate by ~lr against the gradient") {
    Tensor p = Tensor::zeros({3}, true);
    p.data() = {1.f, 2.f, 3.f};
    p.grad() = {0.5f, -2.f, 1e-3f};
    std::vector<ParamGroup> groups{single_group(p, 1e-2)};
    TrainState st;
    adam_step(st, groups);
    // Bias correction makes the first update lr * g/(|g| + eps') ~= lr * sign(g).
    CHECK_THAT(p.data()[0], Catch::Matchers::WithinAbs(1.0 - 1e-2, 1e-5));
    CHECK_THAT(p.data()[1], Catch::Matchers::WithinAbs(2.0 + 1e-2, 1e-5));
    CHECK_THAT(p.data()[2], Catch::Matchers::WithinAbs(3.0 - 1e-2, 1e-4));
    CHECK(st.step == 1);
    for (float g : p.grad()) CHECK(g == 0.f);  // gradients consumed
}

TEST_CASE("two steps reproduce the reference recursion") {
    Tensor p = Tensor::zeros({1}, true);
    p.data() = {0.5f};
    std::vector<ParamGroup> groups{single_group(p, 1e-3)};
    TrainState st;

    // Reference implementation of the same recursion, in double.
    double theta = 0.5, m = 0.0, v = 0.0;
    const double g1 = 0.3, g2 = -0.2;
    auto ref_step = [&](double g, int t) {
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        const double mh = m / (1.0 - std::pow(0.9, t));
        const double vh = v / (1.0 - std::pow(0.999, t));
        theta -= 1e-3 * mh / (std::sqrt(vh) + 1e-8);
    };

    p.grad() = {static_cast<float>(g1)};
    adam_step(st, groups);
    ref_step(g1, 1);
    CHECK_THAT(p.data()[0], Catch::Matchers::WithinAbs(theta, 1e-6));

    p.grad() = {static_cast<float>(g2)};
    adam_step(st, groups);
    ref_step(g2, 2);
    CHECK_THAT(p.data()[0], Catch::Matchers::WithinAbs(theta, 1e-6));
}

TEST_CASE("parameters without a gradient are left untouched") {
    Tensor active = Tensor::zeros({1}, true);
    active.data() = {1.f};
    Tensor idle = Tensor::zeros({1}, true);
    idle.data() = {5.f};
    ParamGroup g;
    g.name = "g";
    g.lr = 1e-2;
    g.params.push_back({"active", active});
    g.params.push_back({"idle", idle});
    std::vector<ParamGroup> groups{g};
    TrainState st;

    active.grad() = {1.f};
    adam_step(st, groups);
    CHECK(active.data()[0] < 1.f);
    CHECK(idle.data()[0] == 5.f);

    // The skipped parameter's moments stayed zero; its first real update uses
    // fresh moments but the shared (global) bias-correction step t=2.
    idle.grad() = {1.f};
    adam_step(st, groups);
    const double mh = 0.1 / (1.0 - 0.9 * 0.9);
    const double vh = 0.001 / (1.0 - 0.999 * 0.999);
    CHECK_THAT(idle.data()[0],
               Catch::Matchers::WithinAbs(5.0 - 1e-2 * mh / (std::sqrt(vh) + 1e-8), 1e-5));
}

TEST_CASE("optimizer state tracks the group layout") {
    Tensor p = Tensor::zeros({2}, true);
    std::vector<ParamGroup> groups{single_group(p, 1e-3)};
    TrainState st;
    p.grad() = {0.1f, 0.1f};
    adam_step(st, groups);

    std::vector<ParamGroup> other{single_group(Tensor::zeros({2}, true), 1e-3),
                                  single_group(Tensor::zeros({2}, true), 1e-3)};
    CHECK_THROWS_AS(adam_step(st, other), ShapeError);
}

TEST_CASE("a non-finite update is reported") {
    Tensor p = Tensor::zeros({1}, true);
    p.data() = {1.f};
    p.grad() = {std::numeric_limits<float>::quiet_NaN()};
    std::vector<ParamGroup> groups{single_group(p, 1e-3)};
    TrainState st;
    CHECK_THROWS_AS(adam_step(st, groups), NumericError);
}

TEST_CASE("zero_grads and set_requires_grad apply to every parameter") {
    Tensor a = Tensor::zeros({1}, true);
    Tensor b = Tensor::zeros({1}, true);
    ParamGroup g;
    g.params.push_back({"a", a});
    g.params.push_back({"b", b});
    std::vector<ParamGroup> groups{g};

    a.grad() = {1.f};
    b.grad() = {2.f};
    zero_grads(groups);
    CHECK(a.grad()[0] == 0.f);
    CHECK(b.grad()[0] == 0.f);

    set_requires_grad(groups, false);
    CHECK_FALSE(a.requires_grad());
    set_requires_grad(groups, true);
    CHECK(a.requires_grad());
}
