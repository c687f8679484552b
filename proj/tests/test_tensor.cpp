#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "pgcr/tensor.hpp"

using namespace pgcr;

namespace {

Tensor from_values(Shape shape, std::vector<float> values, bool requires_grad = false) {
    Tensor t = Tensor::zeros(std::move(shape), requires_grad);
    REQUIRE(t.numel() == values.size());
    t.data() = std::move(values);
    return t;
}

}  // namespace

TEST_CASE("element-wise ops compute expected values") {
    Graph::current().clear();
    Tensor a = from_values({2, 2}, {1.f, 2.f, 3.f, 4.f});
    Tensor b = from_values({2, 2}, {10.f, 20.f, 30.f, 40.f});

    CHECK(add(a, b).data() == std::vector<float>{11.f, 22.f, 33.f, 44.f});
    CHECK(sub(b, a).data() == std::vector<float>{9.f, 18.f, 27.f, 36.f});
    CHECK(mul(a, a).data() == std::vector<float>{1.f, 4.f, 9.f, 16.f});
    CHECK(mul_scalar(a, 2.f).data() == std::vector<float>{2.f, 4.f, 6.f, 8.f});
    CHECK(add_scalar(a, 1.f).data() == std::vector<float>{2.f, 3.f, 4.f, 5.f});
    CHECK(neg(a).data() == std::vector<float>{-1.f, -2.f, -3.f, -4.f});
    CHECK(rsub_scalar(1.f, a).data() == std::vector<float>{0.f, -1.f, -2.f, -3.f});
}

TEST_CASE("bias add broadcasts a row vector over the last axis") {
    Graph::current().clear();
    Tensor x = from_values({2, 3}, {0.f, 1.f, 2.f, 3.f, 4.f, 5.f});
    Tensor bias = from_values({3}, {10.f, 20.f, 30.f});
    CHECK(add(x, bias).data() == std::vector<float>{10.f, 21.f, 32.f, 13.f, 24.f, 35.f});
}

TEST_CASE("matmul matches a hand-multiplied example") {
    Graph::current().clear();
    Tensor a = from_values({2, 3}, {1.f, 2.f, 3.f, 4.f, 5.f, 6.f});
    Tensor b = from_values({3, 2}, {7.f, 8.f, 9.f, 10.f, 11.f, 12.f});
    Tensor c = matmul(a, b);
    REQUIRE(c.shape() == Shape{2, 2});
    CHECK(c.data() == std::vector<float>{58.f, 64.f, 139.f, 154.f});
}

TEST_CASE("batched matmul applies per batch element") {
    Graph::current().clear();
    Tensor a = from_values({2, 1, 2}, {1.f, 2.f, 3.f, 4.f});
    Tensor b = from_values({2, 2, 1}, {1.f, 1.f, 10.f, 10.f});
    Tensor c = matmul(a, b);
    REQUIRE(c.shape() == Shape{2, 1, 1});
    CHECK(c.data() == std::vector<float>{3.f, 70.f});
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
    Graph::current().clear();
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({4, 2});
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
}

TEST_CASE("transpose swaps the last two axes") {
    Graph::current().clear();
    Tensor a = from_values({2, 3}, {1.f, 2.f, 3.f, 4.f, 5.f, 6.f});
    Tensor t = transpose(a);
    REQUIRE(t.shape() == Shape{3, 2});
    CHECK(t.data() == std::vector<float>{1.f, 4.f, 2.f, 5.f, 3.f, 6.f});
}

TEST_CASE("softmax rows are positive and sum to one") {
    Graph::current().clear();
    Tensor x = from_values({2, 3}, {0.f, 1.f, 2.f, -5.f, 0.f, 5.f});
    Tensor s = softmax(x, -1);
    for (std::size_t r = 0; r < 2; ++r) {
        float sum = 0.f;
        for (std::size_t c = 0; c < 3; ++c) {
            const float v = s.data()[r * 3 + c];
            CHECK(v > 0.f);
            sum += v;
        }
        CHECK_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-6));
    }
    // Large inputs must not overflow (max-subtraction inside).
    Tensor big = from_values({1, 2}, {1000.f, 1001.f});
    Tensor sb = softmax(big, -1);
    CHECK(std::isfinite(sb.data()[0]));
    CHECK_THAT(sb.data()[0] + sb.data()[1], Catch::Matchers::WithinAbs(1.0, 1e-6));
}

TEST_CASE("layer_norm standardizes each row then applies the affine pair") {
    Graph::current().clear();
    Tensor x = from_values({1, 4}, {1.f, 2.f, 3.f, 4.f});
    Tensor gamma = from_values({4}, {1.f, 1.f, 1.f, 1.f});
    Tensor beta = from_values({4}, {0.f, 0.f, 0.f, 0.f});
    Tensor y = layer_norm(x, gamma, beta);
    double mean = 0, var = 0;
    for (float v : y.data()) mean += v;
    mean /= 4;
    for (float v : y.data()) var += (v - mean) * (v - mean);
    var /= 4;
    CHECK_THAT(mean, Catch::Matchers::WithinAbs(0.0, 1e-6));
    CHECK_THAT(var, Catch::Matchers::WithinAbs(1.0, 1e-3));

    Tensor gamma2 = from_values({4}, {2.f, 2.f, 2.f, 2.f});
    Tensor beta2 = from_values({4}, {5.f, 5.f, 5.f, 5.f});
    Tensor y2 = layer_norm(x, gamma2, beta2);
    for (std::size_t i = 0; i < 4; ++i)
        CHECK_THAT(y2.data()[i], Catch::Matchers::WithinAbs(2.0 * y.data()[i] + 5.0, 1e-5));
}

TEST_CASE("activation values match closed forms") {
    Graph::current().clear();
    Tensor x = from_values({3}, {-1.f, 0.f, 2.f});
    Tensor s = sigmoid(x);
    CHECK_THAT(s.data()[1], Catch::Matchers::WithinAbs(0.5, 1e-7));
    CHECK_THAT(s.data()[2], Catch::Matchers::WithinAbs(1.0 / (1.0 + std::exp(-2.0)), 1e-6));

    Tensor l = leaky_relu(x, 0.2f);
    CHECK_THAT(l.data()[0], Catch::Matchers::WithinAbs(-0.2, 1e-7));
    CHECK(l.data()[1] == 0.f);
    CHECK(l.data()[2] == 2.f);

    // GELU(0) = 0, GELU is close to identity for large positive inputs.
    Tensor g = gelu(from_values({2}, {0.f, 6.f}));
    CHECK_THAT(g.data()[0], Catch::Matchers::WithinAbs(0.0, 1e-7));
    CHECK_THAT(g.data()[1], Catch::Matchers::WithinAbs(6.0, 1e-3));
}

TEST_CASE("clamp and log behave on boundary values") {
    Graph::current().clear();
    Tensor x = from_values({3}, {-1.f, 0.5f, 2.f});
    Tensor c = clamp(x, 0.f, 1.f);
    CHECK(c.data() == std::vector<float>{0.f, 0.5f, 1.f});
    Tensor lg = log_op(from_values({2}, {1.f, std::exp(1.f)}));
    CHECK_THAT(lg.data()[0], Catch::Matchers::WithinAbs(0.0, 1e-7));
    CHECK_THAT(lg.data()[1], Catch::Matchers::WithinAbs(1.0, 1e-6));
}

TEST_CASE("reductions compute sums and means") {
    Graph::current().clear();
    Tensor x = from_values({2, 2}, {1.f, 2.f, 3.f, 4.f});
    CHECK(sum(x).item() == 10.f);
    CHECK(mean(x).item() == 2.5f);
}

TEST_CASE("row selection ops gather, concatenate, and tile") {
    Graph::current().clear();
    Tensor x = from_values({3, 2}, {1.f, 2.f, 3.f, 4.f, 5.f, 6.f});
    Tensor picked = take_rows(x, {2, 0});
    REQUIRE(picked.shape() == Shape{2, 2});
    CHECK(picked.data() == std::vector<float>{5.f, 6.f, 1.f, 2.f});

    Tensor y = from_values({1, 2}, {7.f, 8.f});
    Tensor c = concat_rows(x, y);
    REQUIRE(c.shape() == Shape{4, 2});
    CHECK(c.data()[6] == 7.f);

    Tensor v = from_values({2}, {9.f, 10.f});
    Tensor tiled = tile_rows(v, 3);
    REQUIRE(tiled.shape() == Shape{3, 2});
    CHECK(tiled.data() == std::vector<float>{9.f, 10.f, 9.f, 10.f, 9.f, 10.f});
}

TEST_CASE("split_heads and merge_heads are inverses") {
    Graph::current().clear();
    Tensor x = from_values({2, 4}, {0.f, 1.f, 2.f, 3.f, 4.f, 5.f, 6.f, 7.f});
    Tensor h = split_heads(x, 2);
    REQUIRE(h.shape() == Shape{2, 2, 2});
    Tensor back = merge_heads(h);
    REQUIRE(back.shape() == x.shape());
    CHECK(back.data() == x.data());
}

TEST_CASE("backward accumulates into leaves through a small graph") {
    Graph::current().clear();
    Tensor x = from_values({2}, {3.f, 4.f}, /*requires_grad=*/true);
    // f = sum(x*x) -> df/dx = 2x
    Tensor loss = sum(mul(x, x));
    backward(loss);
    REQUIRE(x.has_grad());
    CHECK_THAT(x.grad()[0], Catch::Matchers::WithinAbs(6.0, 1e-6));
    CHECK_THAT(x.grad()[1], Catch::Matchers::WithinAbs(8.0, 1e-6));

    // Second backward accumulates on top of the existing leaf gradient.
    Tensor loss2 = sum(mul(x, x));
    backward(loss2);
    CHECK_THAT(x.grad()[0], Catch::Matchers::WithinAbs(12.0, 1e-6));
    Graph::current().clear();
}

TEST_CASE("detach stops gradient flow") {
    Graph::current().clear();
    Tensor x = from_values({2}, {1.f, 2.f}, true);
    Tensor loss = sum(mul(x.detach(), x.detach()));
    backward(loss);
    CHECK_FALSE(x.has_grad());
    Graph::current().clear();
}

TEST_CASE("requires_grad is honored at backward time, not at record time") {
    Graph::current().clear();
    Tensor x = from_values({2}, {1.f, 2.f}, true);
    Tensor loss = sum(mul(x, x));
    x.set_requires_grad(false);  // freeze after the forward pass was recorded
    backward(loss);
    CHECK_FALSE(x.has_grad());
    x.set_requires_grad(true);
    Graph::current().clear();
}

TEST_CASE("NoGradGuard suppresses recording") {
    auto& graph = Graph::current();
    graph.clear();
    Tensor x = from_values({2}, {1.f, 2.f}, true);
    {
        NoGradGuard guard;
        Tensor y = mul(x, x);
        (void)y;
    }
    CHECK(graph.size() == 0);
    Tensor y = mul(x, x);
    (void)y;
    CHECK(graph.size() > 0);
    graph.clear();
}

TEST_CASE("check_finite raises on NaN and infinity") {
    Graph::current().clear();
    Tensor x = from_values({2}, {1.f, 2.f});
    CHECK_NOTHROW(check_finite(x, "x"));
    x.data()[1] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(check_finite(x, "x"), NumericError);
    x.data()[1] = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(check_finite(x, "x"), NumericError);
}

TEST_CASE("reshape requires matching element counts") {
    Graph::current().clear();
    Tensor x = Tensor::zeros({2, 3});
    CHECK_NOTHROW(reshape(x, {3, 2}));
    CHECK_NOTHROW(reshape(x, {6}));
    CHECK_THROWS_AS(reshape(x, {4, 2}), ShapeError);
}

TEST_CASE("double instantiation computes in double precision") {
    GraphT<double>::current().clear();
    TensorT<double> x = TensorT<double>::zeros({1}, true);
    x.data()[0] = 1e-7;
    auto y = add_scalar(mul(x, x), 1.0);
    // 1 + 1e-14 is representable progress in double but washes out in float.
    CHECK(y.data()[0] > 1.0);
    GraphT<double>::current().clear();
}
