#pragma once

#include <cstdint>
#include <string>
#include <type_traits>
#include <vector>

#include "pgcr/data.hpp"
#include "pgcr/discriminator.hpp"
#include "pgcr/generator.hpp"
#include "pgcr/gradcheck.hpp"
#include "pgcr/losses.hpp"
#include "pgcr/patch_ops.hpp"
#include "pgcr/rng.hpp"
#include "pgcr/tensor.hpp"

namespace pgcr {

struct GradCheckResult {
    std::string name;
    double max_rel_err = 0.0;
    double tolerance = 0.0;
    bool passed = false;
};

namespace detail {

inline Tensor rand_tensor(const Shape& shape, double lo, double hi, std::uint64_t seed) {
    Tensor t = Tensor::zeros(shape);
    Rng rng(seed);
    for (auto& v : t.data()) v = static_cast<float>(lo + rng.uniform() * (hi - lo));
    return t;
}

// Values bounded away from zero, for kinked activations (leaky_relu).
inline Tensor rand_signed_offzero(const Shape& shape, std::uint64_t seed) {
    Tensor t = Tensor::zeros(shape);
    Rng rng(seed);
    for (auto& v : t.data()) {
        const double mag = 0.15 + 0.5 * rng.uniform();
        v = static_cast<float>(rng.uniform() < 0.5 ? -mag : mag);
    }
    return t;
}

template <class S2>
TensorT<S2> fixed(const Tensor& t) {
    return cast_tensor<S2>(t);
}

}  // namespace detail

// End-to-end generator objective (reconstruction + weighted adversarial term)
// as a function of one generator parameter, everything else held fixed.
template <class S2>
TensorT<S2> e2e_generator_total(const GeneratorModel& gen, const DiscriminatorModel& disc,
                                const Tensor& cloudy, const Tensor& clean,
                                const TensorT<S2>& patch_embed_w, double lambda_adv) {
    GeneratorModelT<S2> g2 = cast_generator<S2>(gen);
    g2.patch_embed.w = patch_embed_w;
    DiscriminatorModelT<S2> d2 = cast_discriminator<S2>(disc);
    for (auto& p : named_params(d2)) p.tensor.set_requires_grad(false);
    auto fake = generate(g2, cast_tensor<S2>(cloudy), /*training=*/true);
    auto mse = mse_loss(fake, cast_tensor<S2>(clean));
    auto scores = discriminate(d2, patchify(fake, g2.config.grid));
    return combined_generator_loss(mse, g_adv_loss(scores), lambda_adv);
}

// Same objective through the masked-reconstruction path, as a function of the
// mask token.
template <class S2>
TensorT<S2> e2e_masked_recon(const GeneratorModel& gen, const Tensor& image,
                             const TensorT<S2>& mask_token) {
    GeneratorModelT<S2> g2 = cast_generator<S2>(gen);
    g2.mask_token = mask_token;
    auto img = cast_tensor<S2>(image);
    auto rec = reconstruct(g2, img, 0.75, 424242);
    auto target = patchify(img, g2.config.grid);
    const auto masked = rec.plan.masked_indices();
    return mse_loss(take_rows(rec.pred, masked), take_rows(target, masked).detach());
}

// Discriminator objective as a function of its first weight matrix.
template <class S2>
TensorT<S2> e2e_discriminator_loss(const DiscriminatorModel& disc, const Tensor& real_patches,
                                   const Tensor& fake_patches, const TensorT<S2>& w0) {
    DiscriminatorModelT<S2> d2 = cast_discriminator<S2>(disc);
    d2.weights[0] = w0;
    auto real_scores = discriminate(d2, detail::fixed<S2>(real_patches));
    auto fake_scores = discriminate(d2, detail::fixed<S2>(fake_patches));
    return d_loss(real_scores, fake_scores);
}

// Run the finite-difference harness over every differentiable op and the
// end-to-end training objectives at the toy geometry. One row per case.
inline std::vector<GradCheckResult> run_gradcheck_suite(double tolerance = 1e-3,
                                                        bool include_end_to_end = true) {
    std::vector<GradCheckResult> results;
    auto check = [&](const std::string& name, auto&& fn, const Tensor& x,
                     std::size_t max_coords = std::numeric_limits<std::size_t>::max(),
                     double h = 1e-3) {
        GradCheckResult r;
        r.name = name;
        r.tolerance = tolerance;
        r.max_rel_err = finite_diff_check(fn, x, h, max_coords, /*sample_seed=*/17);
        r.passed = r.max_rel_err <= tolerance;
        results.push_back(r);
    };
    using detail::fixed;

    const Tensor a34 = detail::rand_tensor({3, 4}, -0.8, 0.8, 101);
    const Tensor b34 = detail::rand_tensor({3, 4}, -0.8, 0.8, 102);
    const Tensor bias4 = detail::rand_tensor({4}, -0.5, 0.5, 103);
    const Tensor m23 = detail::rand_tensor({2, 3}, -0.7, 0.7, 104);
    const Tensor m34 = detail::rand_tensor({3, 4}, -0.7, 0.7, 105);
    const Tensor batch_a = detail::rand_tensor({2, 3, 4}, -0.6, 0.6, 106);
    const Tensor batch_b = detail::rand_tensor({2, 4, 2}, -0.6, 0.6, 107);

    check("add.lhs", [&](auto t) { return sum(add(t, fixed<typename decltype(t)::Scalar>(b34))); }, a34);
    check("add.rhs", [&](auto t) { return sum(add(fixed<typename decltype(t)::Scalar>(a34), t)); }, b34);
    check("add.bias", [&](auto t) { return sum(add(fixed<typename decltype(t)::Scalar>(a34), t)); }, bias4);
    check("sub.lhs", [&](auto t) { return sum(sub(t, fixed<typename decltype(t)::Scalar>(b34))); }, a34);
    check("sub.rhs", [&](auto t) { return sum(sub(fixed<typename decltype(t)::Scalar>(a34), t)); }, b34);
    check("mul.lhs", [&](auto t) { return sum(mul(t, fixed<typename decltype(t)::Scalar>(b34))); }, a34);
    check("mul.rhs", [&](auto t) { return sum(mul(fixed<typename decltype(t)::Scalar>(a34), t)); }, b34);
    check("mul_scalar", [](auto t) {
        using S2 = typename decltype(t)::Scalar;
        return sum(mul_scalar(t, S2(-1.7)));
    }, a34);
    check("add_scalar", [](auto t) {
        using S2 = typename decltype(t)::Scalar;
        return sum(mul(add_scalar(t, S2(0.3)), add_scalar(t, S2(-0.2))));
    }, a34);
    check("neg", [](auto t) { return sum(mul(neg(t), neg(t))); }, a34);
    check("rsub_scalar", [](auto t) {
        using S2 = typename decltype(t)::Scalar;
        return sum(mul(rsub_scalar(S2(1), t), rsub_scalar(S2(1), t)));
    }, a34);
    check("matmul.lhs", [&](auto t) { return sum(matmul(t, fixed<typename decltype(t)::Scalar>(m34))); }, m23);
    check("matmul.rhs", [&](auto t) { return sum(matmul(fixed<typename decltype(t)::Scalar>(m23), t)); }, m34);
    check("matmul.batched.lhs",
          [&](auto t) { return sum(matmul(t, fixed<typename decltype(t)::Scalar>(batch_b))); },
          batch_a);
    check("matmul.batched.rhs",
          [&](auto t) { return sum(matmul(fixed<typename decltype(t)::Scalar>(batch_a), t)); },
          batch_b);
    check("transpose", [&](auto t) {
        return sum(matmul(fixed<typename decltype(t)::Scalar>(m23), transpose(t)));
    }, detail::rand_tensor({4, 3}, -0.7, 0.7, 108));
    check("reshape", [](auto t) { return sum(mul(reshape(t, {4, 3}), reshape(t, {4, 3}))); }, a34);
    check("softmax", [](auto t) {
        using S2 = typename decltype(t)::Scalar;
        // Weighted sum keeps the check sensitive (plain sum of softmax is constant).
        auto w = TensorT<S2>::zeros(t.shape());
        for (std::size_t i = 0; i < w.numel(); ++i) w.data()[i] = S2(0.1) * S2(i % 5);
        return sum(mul(softmax(t, -1), w));
    }, detail::rand_tensor({3, 5}, -1.0, 1.0, 109));
    {
        const Tensor ln_x = detail::rand_tensor({4, 6}, -1.0, 1.0, 110);
        const Tensor ln_g = detail::rand_tensor({6}, 0.5, 1.5, 111);
        const Tensor ln_b = detail::rand_tensor({6}, -0.3, 0.3, 112);
        check("layer_norm.x", [&](auto t) {
            using S2 = typename decltype(t)::Scalar;
            return sum(mul(layer_norm(t, fixed<S2>(ln_g), fixed<S2>(ln_b)),
                           fixed<S2>(detail::rand_tensor({4, 6}, -1.0, 1.0, 113))));
        }, ln_x);
        check("layer_norm.gamma", [&](auto t) {
            using S2 = typename decltype(t)::Scalar;
            return sum(mul(layer_norm(fixed<S2>(ln_x), t, fixed<S2>(ln_b)),
                           fixed<S2>(detail::rand_tensor({4, 6}, -1.0, 1.0, 113))));
        }, ln_g);
        check("layer_norm.beta", [&](auto t) {
            using S2 = typename decltype(t)::Scalar;
            return sum(mul(layer_norm(fixed<S2>(ln_x), fixed<S2>(ln_g), t),
                           fixed<S2>(detail::rand_tensor({4, 6}, -1.0, 1.0, 113))));
        }, ln_b);
    }
    check("gelu", [](auto t) { return sum(gelu(t)); },
          detail::rand_tensor({3, 4}, -1.5, 1.5, 114));
    check("sigmoid", [](auto t) { return sum(sigmoid(t)); },
          detail::rand_tensor({3, 4}, -2.0, 2.0, 115));
    check("leaky_relu", [](auto t) {
        using S2 = typename decltype(t)::Scalar;
        return sum(leaky_relu(t, S2(0.2)));
    }, detail::rand_signed_offzero({3, 4}, 116));
    check("log", [](auto t) { return sum(log_op(t)); },
          detail::rand_tensor({3, 4}, 0.3, 1.5, 117));
    check("clamp", [](auto t) {
        using S2 = typename decltype(t)::Scalar;
        return sum(mul(clamp(t, S2(-2), S2(2)), clamp(t, S2(-2), S2(2))));
    }, a34);
    check("sum", [](auto t) { return sum(t); }, a34);
    check("mean", [](auto t) { return mean(mul(t, t)); }, a34);
    check("take_rows", [](auto t) {
        auto picked = take_rows(t, std::vector<std::size_t>{2, 0, 2, 1});
        return mean(mul(picked, picked));
    }, a34);
    check("concat_rows.top", [&](auto t) {
        using S2 = typename decltype(t)::Scalar;
        auto c = concat_rows(t, fixed<S2>(b34));
        return mean(mul(c, c));
    }, a34);
    check("concat_rows.bottom", [&](auto t) {
        using S2 = typename decltype(t)::Scalar;
        auto c = concat_rows(fixed<S2>(a34), t);
        return mean(mul(c, c));
    }, b34);
    check("tile_rows", [](auto t) {
        auto tiled = tile_rows(t, 3);
        return mean(mul(tiled, tiled));
    }, bias4);
    check("split_heads", [](auto t) {
        auto h = split_heads(t, 2);
        return mean(mul(h, h));
    }, detail::rand_tensor({3, 8}, -0.9, 0.9, 118));
    check("merge_heads", [](auto t) {
        auto m = merge_heads(matmul(t, t));
        return mean(mul(m, m));
    }, detail::rand_tensor({2, 4, 4}, -0.6, 0.6, 119));
    {
        const PatchGrid grid{8, 4, 3};
        check("patchify", [&](auto t) {
            auto p = patchify(t, grid);
            return mean(mul(p, p));
        }, detail::rand_tensor({3, 8, 8}, -0.9, 0.9, 120));
        check("unpatchify", [&](auto t) {
            auto img = unpatchify(t, grid);
            return mean(mul(img, img));
        }, detail::rand_tensor({4, 48}, -0.9, 0.9, 121));
    }

    if (include_end_to_end) {
        const GeneratorConfig toy = GeneratorConfig::toy();
        const GeneratorModel gen = init_generator(toy, 2024);
        DiscriminatorConfig dc;
        dc.patch_dim = toy.grid.patch_dim();
        // Narrow head: wide float32 dot products would drown the comparison in
        // rounding noise, and the chain-rule wiring is width-independent.
        dc.hidden = {32, 16};
        const DiscriminatorModel disc = init_discriminator(dc, 2025);
        const Tensor cloudy = detail::rand_tensor({3, 64, 64}, 0.05, 0.95, 122);
        const Tensor clean = detail::rand_tensor({3, 64, 64}, 0.05, 0.95, 123);

        check("e2e.generator_total", [&](auto t) {
            return e2e_generator_total(gen, disc, cloudy, clean, t, 0.1);
        }, gen.patch_embed.w, /*max_coords=*/6, /*h=*/1e-3);
        check("e2e.masked_reconstruction", [&](auto t) {
            return e2e_masked_recon(gen, clean, t);
        }, gen.mask_token, /*max_coords=*/6, /*h=*/1e-3);

        Tensor real_patches, fake_patches;
        {
            NoGradGuard guard;
            real_patches = patchify(clean, toy.grid);
            fake_patches = patchify(generate(gen, cloudy, false), toy.grid);
        }
        // Small step: a leaky_relu pre-activation within h of zero would put
        // the central difference astride the kink.
        check("e2e.discriminator_loss", [&](auto t) {
            return e2e_discriminator_loss(disc, real_patches, fake_patches, t);
        }, disc.weights[0], /*max_coords=*/6, /*h=*/1e-4);
    }
    return results;
}

}  // namespace pgcr
