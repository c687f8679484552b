#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "pgcr/losses.hpp"

using namespace pgcr;

namespace {

Tensor constant(Shape shape, float v) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (auto& x : t.data()) x = v;
    return t;
}

Tensor from_values(Shape shape, std::vector<float> values) {
    Tensor t = Tensor::zeros(std::move(shape));
    t.data() = std::move(values);
    return t;
}

}  // namespace

TEST_CASE("mse_loss matches hand-computed cases") {
    Graph::current().clear();
    // Differences 1,2,3,4 -> squares 1,4,9,16 -> mean 7.5.
    Tensor pred = from_values({4}, {2.f, 4.f, 6.f, 8.f});
    Tensor target = from_values({4}, {1.f, 2.f, 3.f, 4.f});
    CHECK_THAT(mse_loss(pred, target).item(), Catch::Matchers::WithinAbs(7.5, 1e-6));

    CHECK(mse_loss(target, target).item() == 0.f);
    CHECK_THROWS_AS(mse_loss(pred, Tensor::zeros({3})), ShapeError);
}

TEST_CASE("discriminator loss at the indifference point is 2 ln 2") {
    Graph::current().clear();
    Tensor half = constant({8}, 0.5f);
    const double expected = 2.0 * std::log(2.0);
    CHECK_THAT(d_loss(half, half).item(), Catch::Matchers::WithinAbs(expected, 1e-6));
}

TEST_CASE("generator adversarial loss at one-half is ln 2") {
    Graph::current().clear();
    Tensor half = constant({8}, 0.5f);
    CHECK_THAT(g_adv_loss(half).item(), Catch::Matchers::WithinAbs(std::log(2.0), 1e-6));
}

TEST_CASE("two-patch hand case for both adversarial losses") {
    Graph::current().clear();
    Tensor real = from_values({2}, {0.9f, 0.6f});
    Tensor fake = from_values({2}, {0.2f, 0.3f});
    // -( mean(ln .9, ln .6) + mean(ln .8, ln .7) )
    const double expected_d =
        -((std::log(0.9) + std::log(0.6)) / 2.0 + (std::log(0.8) + std::log(0.7)) / 2.0);
    CHECK_THAT(d_loss(real, fake).item(), Catch::Matchers::WithinAbs(expected_d, 1e-6));

    // -mean(ln .2, ln .3)
    const double expected_g = -(std::log(0.2) + std::log(0.3)) / 2.0;
    CHECK_THAT(g_adv_loss(fake).item(), Catch::Matchers::WithinAbs(expected_g, 1e-6));
}

TEST_CASE("saturated scores stay finite through the epsilon clamp") {
    Graph::current().clear();
    Tensor ones = constant({4}, 1.f);
    Tensor zeros = constant({4}, 0.f);
    // Perfect discrimination: loss collapses to zero.
    CHECK_THAT(d_loss(ones, zeros).item(), Catch::Matchers::WithinAbs(0.0, 1e-5));
    // Total confusion: both terms clamp at eps, giving -2 ln eps.
    const double worst = -2.0 * std::log(kLogitEps);
    CHECK_THAT(d_loss(zeros, ones).item(), Catch::Matchers::WithinRel(worst, 1e-4));
    CHECK(std::isfinite(g_adv_loss(zeros).item()));
}

TEST_CASE("d_loss is minimized by correct classification") {
    Graph::current().clear();
    const double base =
        d_loss(constant({4}, 0.9f), constant({4}, 0.1f)).item();
    for (float real : {0.3f, 0.5f, 0.7f})
        for (float fake : {0.3f, 0.5f, 0.7f})
            CHECK(d_loss(constant({4}, real), constant({4}, fake)).item() > base);
}

TEST_CASE("g_adv_loss decreases as fake scores rise") {
    Graph::current().clear();
    double prev = g_adv_loss(constant({4}, 0.1f)).item();
    for (float s : {0.3f, 0.5f, 0.7f, 0.9f}) {
        const double cur = g_adv_loss(constant({4}, s)).item();
        CHECK(cur < prev);
        prev = cur;
    }
}

TEST_CASE("combined generator objective weights the adversarial term") {
    Graph::current().clear();
    Tensor pred = from_values({2}, {1.f, 2.f});
    Tensor target = from_values({2}, {0.f, 0.f});
    Tensor scores = constant({2}, 0.5f);
    auto mse = mse_loss(pred, target);
    auto adv = g_adv_loss(scores);
    const float total = combined_generator_loss(mse, adv, 0.1).item();
    CHECK_THAT(total, Catch::Matchers::WithinAbs(2.5 + 0.1 * std::log(2.0), 1e-6));
    CHECK_THROWS_AS(combined_generator_loss(mse, adv, -0.5), UsageError);
}

TEST_CASE("report totals are exact sums of their parts") {
    LossReport r;
    r.mse = 0.125;
    r.g_adv = 0.6931471805599453;
    r.d = 1.3862943611198906;
    r.lambda_adv = 0.1;
    CHECK(r.gan_total() == r.d + r.g_adv);          // exact, no rounding allowed
    CHECK(r.g_total() == r.mse + 0.1 * r.g_adv);    // exact double arithmetic
}

TEST_CASE("csv row layout is stable") {
    LossReport r;
    r.mse = 0.5;
    r.g_adv = 0.25;
    r.d = 1.5;
    r.lambda_adv = 0.1;
    CHECK(loss_csv_header() == "step,mse,g_adv,d_loss,g_total");
    CHECK(loss_csv_row(3, r) == "3,0.5,0.25,1.5,0.525");
}

TEST_CASE("losses drive gradients in the useful direction") {
    auto& graph = Graph::current();
    graph.clear();
    Tensor scores = Tensor::zeros({4}, /*requires_grad=*/true);
    for (auto& v : scores.data()) v = 0.5f;
    backward(g_adv_loss(scores));
    // d(-mean ln s)/ds = -1/(4s) < 0: raising scores lowers the loss.
    for (float g : scores.grad()) CHECK(g < 0.f);
    graph.clear();
}
