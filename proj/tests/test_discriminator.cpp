#include <catch2/catch_amalgamated.hpp>

#include "pgcr/discriminator.hpp"

using namespace pgcr;

namespace {

DiscriminatorConfig toy_config() {
    DiscriminatorConfig c;
    c.patch_dim = 192;
    c.hidden = {32, 16};
    return c;
}

Tensor random_patches(std::size_t rows, std::size_t dim, std::uint64_t seed) {
    Tensor t = Tensor::zeros({rows, dim});
    Rng rng(seed);
    for (auto& v : t.data()) v = static_cast<float>(rng.uniform());
    return t;
}

}  // namespace

TEST_CASE("configuration validation") {
    CHECK_NOTHROW(toy_config().validate());
    DiscriminatorConfig c = toy_config();
    c.patch_dim = 0;
    CHECK_THROWS_AS(c.validate(), ShapeError);
    c = toy_config();
    c.hidden = {32, 0};
    CHECK_THROWS_AS(c.validate(), ShapeError);
}

TEST_CASE("default head matches the documented 512/256 stack") {
    DiscriminatorConfig c;
    CHECK(c.patch_dim == 192);
    REQUIRE(c.hidden == std::vector<std::size_t>{512, 256});
    CHECK_THAT(c.leaky_slope, Catch::Matchers::WithinAbs(0.2, 1e-6));
}

TEST_CASE("parameter count follows the layer widths") {
    DiscriminatorModel m = init_discriminator(toy_config(), 1);
    // 192->32->16->1: (192*32+32) + (32*16+16) + (16*1+1).
    CHECK(param_count(m) == 6176 + 528 + 17);
    auto params = named_params(m);
    REQUIRE(params.size() == 6);
    CHECK(params[0].name == "disc.0.w");
    CHECK(params[5].name == "disc.2.b");
}

TEST_CASE("one probability per patch, all strictly inside (0,1)") {
    Graph::current().clear();
    DiscriminatorModel m = init_discriminator(toy_config(), 2);
    Tensor patches = random_patches(64, 192, 3);
    NoGradGuard guard;
    Tensor scores = discriminate(m, patches);
    REQUIRE(scores.shape() == Shape{64});
    for (float v : scores.data()) {
        CHECK(v > 0.f);
        CHECK(v < 1.f);
    }
}

TEST_CASE("patch scores are row-independent") {
    Graph::current().clear();
    DiscriminatorModel m = init_discriminator(toy_config(), 2);
    Tensor patches = random_patches(8, 192, 4);
    NoGradGuard guard;
    Tensor before = discriminate(m, patches);

    Tensor altered = patches.detach();
    for (std::size_t c = 0; c < 192; ++c) altered.data()[5 * 192 + c] += 0.3f;
    Tensor after = discriminate(m, altered);

    for (std::size_t r = 0; r < 8; ++r) {
        if (r == 5)
            CHECK(before.data()[r] != after.data()[r]);
        else
            CHECK(before.data()[r] == after.data()[r]);
    }
}

TEST_CASE("empty hidden list gives a single-affine head") {
    Graph::current().clear();
    DiscriminatorConfig c;
    c.patch_dim = 192;
    c.hidden = {};
    CHECK_NOTHROW(c.validate());
    DiscriminatorModel m = init_discriminator(c, 3);
    CHECK(param_count(m) == 192 + 1);

    NoGradGuard guard;
    Tensor scores = discriminate(m, random_patches(64, 192, 9));
    REQUIRE(scores.shape() == Shape{64});
    for (float v : scores.data()) {
        CHECK(v > 0.f);
        CHECK(v < 1.f);
    }

    // zeroed final layer scores everything exactly sigmoid(0) = 0.5
    for (auto& w : m.weights) std::fill(w.data().begin(), w.data().end(), 0.f);
    for (auto& b : m.biases) std::fill(b.data().begin(), b.data().end(), 0.f);
    Tensor neutral = discriminate(m, random_patches(16, 192, 10));
    for (float v : neutral.data()) CHECK(v == 0.5f);
}

TEST_CASE("input width is validated") {
    Graph::current().clear();
    DiscriminatorModel m = init_discriminator(toy_config(), 2);
    CHECK_THROWS_AS(discriminate(m, Tensor::zeros({4, 100})), ShapeError);
}

TEST_CASE("deterministic initialization and grouping") {
    DiscriminatorModel a = init_discriminator(toy_config(), 5);
    DiscriminatorModel b = init_discriminator(toy_config(), 5);
    CHECK(a.weights[0].data() == b.weights[0].data());

    auto groups = discriminator_param_groups(a, 2e-4);
    REQUIRE(groups.size() == 1);
    CHECK(groups[0].lr == 2e-4);
    CHECK(groups[0].params.size() == named_params(a).size());
}

TEST_CASE("float/double casts round trip") {
    DiscriminatorModel m = init_discriminator(toy_config(), 6);
    auto d = cast_discriminator<double>(m);
    auto back = cast_discriminator<float>(d);
    for (std::size_t i = 0; i < m.weights.size(); ++i) {
        CHECK(m.weights[i].data() == back.weights[i].data());
        CHECK(m.biases[i].data() == back.biases[i].data());
    }
}
