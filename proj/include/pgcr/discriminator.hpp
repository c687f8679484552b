#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pgcr/errors.hpp"
#include "pgcr/optimizer.hpp"
#include "pgcr/rng.hpp"
#include "pgcr/tensor.hpp"

namespace pgcr {

// Per-patch classifier: a small fully-connected net applied to every patch row
// independently, ending in a sigmoid probability that the patch is real.
struct DiscriminatorConfig {
    std::size_t patch_dim = 192;
    std::vector<std::size_t> hidden = {512, 256};
    float leaky_slope = 0.2f;

    void validate() const {
        if (patch_dim == 0)
            throw ShapeError("discriminator config: patch_dim must be positive");
        for (std::size_t h : hidden)
            if (h == 0) throw ShapeError("discriminator config: hidden widths must be positive");
    }
};

template <class S>
struct DiscriminatorModelT {
    DiscriminatorConfig config;
    std::vector<TensorT<S>> weights;  // [in, out] per layer
    std::vector<TensorT<S>> biases;   // [out] per layer
};

using DiscriminatorModel = DiscriminatorModelT<float>;

template <class S = float>
DiscriminatorModelT<S> init_discriminator(const DiscriminatorConfig& config,
                                          std::uint64_t seed) {
    config.validate();
    DiscriminatorModelT<S> m;
    m.config = config;
    Rng rng(derive_seed(seed, 2));
    std::vector<std::size_t> widths;
    widths.push_back(config.patch_dim);
    widths.insert(widths.end(), config.hidden.begin(), config.hidden.end());
    widths.push_back(1);
    for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
        TensorT<S> w = TensorT<S>::zeros({widths[i], widths[i + 1]}, /*requires_grad=*/true);
        for (auto& x : w.data()) x = static_cast<S>(rng.truncated_normal(0.02));
        m.weights.push_back(std::move(w));
        m.biases.push_back(TensorT<S>::zeros({widths[i + 1]}, /*requires_grad=*/true));
    }
    return m;
}

template <class S>
std::vector<NamedParamT<S>> named_params(const DiscriminatorModelT<S>& m) {
    std::vector<NamedParamT<S>> out;
    for (std::size_t i = 0; i < m.weights.size(); ++i) {
        out.push_back({"disc." + std::to_string(i) + ".w", m.weights[i]});
        out.push_back({"disc." + std::to_string(i) + ".b", m.biases[i]});
    }
    return out;
}

template <class S>
std::size_t param_count(const DiscriminatorModelT<S>& m) {
    std::size_t n = 0;
    for (const auto& p : named_params(m)) n += p.tensor.numel();
    return n;
}

// The discriminator trains as one group at the full learning rate.
template <class S>
std::vector<ParamGroupT<S>> discriminator_param_groups(const DiscriminatorModelT<S>& m,
                                                       double lr) {
    ParamGroupT<S> g;
    g.name = "disc";
    g.params = named_params(m);
    g.lr = lr;
    g.group_index = 0;
    return {std::move(g)};
}

// Copy a model into another scalar type.
template <class To, class From>
DiscriminatorModelT<To> cast_discriminator(const DiscriminatorModelT<From>& src) {
    DiscriminatorModelT<To> dst = init_discriminator<To>(src.config, 0);
    auto s = named_params(src);
    auto d = named_params(dst);
    for (std::size_t i = 0; i < s.size(); ++i) {
        auto& from = s[i].tensor.data();
        auto& to = d[i].tensor.data();
        for (std::size_t j = 0; j < from.size(); ++j) to[j] = static_cast<To>(from[j]);
    }
    return dst;
}

// Scores one patch matrix [P, patch_dim] -> [P] probabilities in (0, 1).
template <class S>
TensorT<S> discriminate(const DiscriminatorModelT<S>& m, const TensorT<S>& patches) {
    if (patches.rank() != 2 || patches.dim(1) != m.config.patch_dim)
        throw ShapeError("discriminate: expected [*, " + std::to_string(m.config.patch_dim) +
                         "] patches, got " + shape_str(patches.shape()));
    TensorT<S> x = patches;
    const std::size_t L = m.weights.size();
    for (std::size_t i = 0; i < L; ++i) {
        x = add(matmul(x, m.weights[i]), m.biases[i]);
        if (i + 1 < L) x = leaky_relu(x, S(m.config.leaky_slope));
    }
    return reshape(sigmoid(x), {patches.dim(0)});
}

}  // namespace pgcr
