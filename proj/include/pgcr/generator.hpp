#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pgcr/errors.hpp"
#include "pgcr/optimizer.hpp"
#include "pgcr/patch_ops.hpp"
#include "pgcr/rng.hpp"
#include "pgcr/tensor.hpp"

namespace pgcr {

struct GeneratorConfig {
    PatchGrid grid{64, 8, 3};
    std::size_t enc_dim = 64;
    std::size_t enc_depth = 2;
    std::size_t enc_heads = 4;
    std::size_t dec_dim = 32;
    std::size_t dec_depth = 1;
    std::size_t dec_heads = 4;

    void validate() const {
        // Re-run the grid invariant: members may have been mutated after
        // construction, bypassing the PatchGrid constructor's check.
        (void)PatchGrid(grid.image_size, grid.patch_size, grid.channels);
        if (enc_dim == 0 || dec_dim == 0 || enc_depth == 0 || dec_depth == 0 ||
            enc_heads == 0 || dec_heads == 0)
            throw ShapeError("generator config: all dimensions must be positive");
        if (enc_dim % enc_heads != 0)
            throw ShapeError("generator config: enc_dim " + std::to_string(enc_dim) +
                             " not divisible by enc_heads " + std::to_string(enc_heads));
        if (dec_dim % dec_heads != 0)
            throw ShapeError("generator config: dec_dim " + std::to_string(dec_dim) +
                             " not divisible by dec_heads " + std::to_string(dec_heads));
        if (enc_dim % 4 != 0 || dec_dim % 4 != 0)
            throw ShapeError("generator config: embedding widths must be divisible by 4 "
                             "for 2-D sin-cos positions");
    }

    // Small geometry used throughout the test suite and the bundled experiments.
    static GeneratorConfig toy() { return GeneratorConfig{}; }

    // Full-size geometry: 224x224 images, 16x16 patches (196 tokens of width 768),
    // with the standard large encoder / light decoder split.
    static GeneratorConfig full() {
        GeneratorConfig c;
        c.grid = PatchGrid{224, 16, 3};
        c.enc_dim = 1024;
        c.enc_depth = 24;
        c.enc_heads = 16;
        c.dec_dim = 512;
        c.dec_depth = 8;
        c.dec_heads = 16;
        return c;
    }
};

template <class S>
struct LinearT {
    TensorT<S> w;  // [in, out]
    TensorT<S> b;  // [out]
};

// One pre-norm transformer block: LN -> multi-head self-attention -> residual,
// then LN -> 4x MLP with GELU -> residual.
template <class S>
struct BlockT {
    TensorT<S> ln1_g, ln1_b;
    LinearT<S> wq, wk, wv, wo;
    TensorT<S> ln2_g, ln2_b;
    LinearT<S> fc1, fc2;  // dim -> 4*dim -> dim
};

template <class S>
struct GeneratorModelT {
    GeneratorConfig config;

    LinearT<S> patch_embed;        // patch_dim -> enc_dim
    TensorT<S> enc_pos;            // [P, enc_dim], fixed sin-cos (not trained)
    std::vector<BlockT<S>> enc_blocks;
    TensorT<S> enc_norm_g, enc_norm_b;

    LinearT<S> dec_embed;          // enc_dim -> dec_dim
    TensorT<S> mask_token;         // [dec_dim]
    TensorT<S> dec_pos;            // [P, dec_dim], fixed sin-cos
    std::vector<BlockT<S>> dec_blocks;
    TensorT<S> dec_norm_g, dec_norm_b;
    LinearT<S> pred_head;          // dec_dim -> patch_dim
};

using GeneratorModel = GeneratorModelT<float>;

namespace detail {

template <class S>
TensorT<S> init_weight(Rng& rng, std::size_t rows, std::size_t cols, double sigma = 0.02) {
    TensorT<S> t = TensorT<S>::zeros({rows, cols}, /*requires_grad=*/true);
    for (auto& x : t.data()) x = static_cast<S>(rng.truncated_normal(sigma));
    return t;
}

template <class S>
LinearT<S> init_linear(Rng& rng, std::size_t in, std::size_t out) {
    LinearT<S> l;
    l.w = init_weight<S>(rng, in, out);
    l.b = TensorT<S>::zeros({out}, /*requires_grad=*/true);
    return l;
}

template <class S>
BlockT<S> init_block(Rng& rng, std::size_t dim) {
    BlockT<S> b;
    b.ln1_g = TensorT<S>::filled({dim}, S(1), true);
    b.ln1_b = TensorT<S>::zeros({dim}, true);
    b.wq = init_linear<S>(rng, dim, dim);
    b.wk = init_linear<S>(rng, dim, dim);
    b.wv = init_linear<S>(rng, dim, dim);
    b.wo = init_linear<S>(rng, dim, dim);
    b.ln2_g = TensorT<S>::filled({dim}, S(1), true);
    b.ln2_b = TensorT<S>::zeros({dim}, true);
    b.fc1 = init_linear<S>(rng, dim, 4 * dim);
    b.fc2 = init_linear<S>(rng, 4 * dim, dim);
    return b;
}

template <class S>
void collect_block(std::vector<NamedParamT<S>>& out, const std::string& prefix,
                   const BlockT<S>& b) {
    out.push_back({prefix + ".ln1.g", b.ln1_g});
    out.push_back({prefix + ".ln1.b", b.ln1_b});
    out.push_back({prefix + ".attn.q.w", b.wq.w});
    out.push_back({prefix + ".attn.q.b", b.wq.b});
    out.push_back({prefix + ".attn.k.w", b.wk.w});
    out.push_back({prefix + ".attn.k.b", b.wk.b});
    out.push_back({prefix + ".attn.v.w", b.wv.w});
    out.push_back({prefix + ".attn.v.b", b.wv.b});
    out.push_back({prefix + ".attn.o.w", b.wo.w});
    out.push_back({prefix + ".attn.o.b", b.wo.b});
    out.push_back({prefix + ".ln2.g", b.ln2_g});
    out.push_back({prefix + ".ln2.b", b.ln2_b});
    out.push_back({prefix + ".mlp.fc1.w", b.fc1.w});
    out.push_back({prefix + ".mlp.fc1.b", b.fc1.b});
    out.push_back({prefix + ".mlp.fc2.w", b.fc2.w});
    out.push_back({prefix + ".mlp.fc2.b", b.fc2.b});
}

}  // namespace detail

// Deterministic initialization: weights are truncated-normal (sigma 0.02),
// biases zero, layer-norm gains one. The same seed reproduces the same model.
template <class S = float>
GeneratorModelT<S> init_generator(const GeneratorConfig& config, std::uint64_t seed) {
    config.validate();
    GeneratorModelT<S> m;
    m.config = config;
    const std::size_t P = config.grid.num_patches();
    const std::size_t pd = config.grid.patch_dim();
    Rng rng(derive_seed(seed, 1));

    m.patch_embed = detail::init_linear<S>(rng, pd, config.enc_dim);
    m.enc_pos = sincos_positional_embedding<S>(config.grid, config.enc_dim);
    m.enc_blocks.reserve(config.enc_depth);
    for (std::size_t i = 0; i < config.enc_depth; ++i)
        m.enc_blocks.push_back(detail::init_block<S>(rng, config.enc_dim));
    m.enc_norm_g = TensorT<S>::filled({config.enc_dim}, S(1), true);
    m.enc_norm_b = TensorT<S>::zeros({config.enc_dim}, true);

    m.dec_embed = detail::init_linear<S>(rng, config.enc_dim, config.dec_dim);
    m.mask_token = TensorT<S>::zeros({config.dec_dim}, /*requires_grad=*/true);
    for (auto& x : m.mask_token.data()) x = static_cast<S>(rng.truncated_normal(0.02));
    m.dec_pos = sincos_positional_embedding<S>(config.grid, config.dec_dim);
    m.dec_blocks.reserve(config.dec_depth);
    for (std::size_t i = 0; i < config.dec_depth; ++i)
        m.dec_blocks.push_back(detail::init_block<S>(rng, config.dec_dim));
    m.dec_norm_g = TensorT<S>::filled({config.dec_dim}, S(1), true);
    m.dec_norm_b = TensorT<S>::zeros({config.dec_dim}, true);
    m.pred_head = detail::init_linear<S>(rng, config.dec_dim, pd);

    (void)P;
    return m;
}

// Trainable parameters in a fixed, checkpoint-stable order.
template <class S>
std::vector<NamedParamT<S>> named_params(const GeneratorModelT<S>& m) {
    std::vector<NamedParamT<S>> out;
    out.push_back({"patch_embed.w", m.patch_embed.w});
    out.push_back({"patch_embed.b", m.patch_embed.b});
    for (std::size_t i = 0; i < m.enc_blocks.size(); ++i)
        detail::collect_block(out, "enc." + std::to_string(i), m.enc_blocks[i]);
    out.push_back({"enc.norm.g", m.enc_norm_g});
    out.push_back({"enc.norm.b", m.enc_norm_b});
    out.push_back({"dec.embed.w", m.dec_embed.w});
    out.push_back({"dec.embed.b", m.dec_embed.b});
    out.push_back({"mask_token", m.mask_token});
    for (std::size_t i = 0; i < m.dec_blocks.size(); ++i)
        detail::collect_block(out, "dec." + std::to_string(i), m.dec_blocks[i]);
    out.push_back({"dec.norm.g", m.dec_norm_g});
    out.push_back({"dec.norm.b", m.dec_norm_b});
    out.push_back({"head.w", m.pred_head.w});
    out.push_back({"head.b", m.pred_head.b});
    return out;
}

template <class S>
std::size_t param_count(const GeneratorModelT<S>& m) {
    std::size_t n = 0;
    for (const auto& p : named_params(m)) n += p.tensor.numel();
    return n;
}

// Depth-ordered learning-rate groups for fine-tuning:
//   [patch embed] [encoder block 0..] [decoder embed + mask token]
//   [decoder block 0..] [prediction head + final norms]
// The encoder's final norm travels with its last block.
template <class S>
std::vector<ParamGroupT<S>> generator_param_groups(const GeneratorModelT<S>& m,
                                                   double base_lr, double decay) {
    std::vector<ParamGroupT<S>> groups;
    auto add_group = [&](const std::string& name, std::vector<NamedParamT<S>> params) {
        ParamGroupT<S> g;
        g.name = name;
        g.params = std::move(params);
        g.group_index = groups.size();
        groups.push_back(std::move(g));
    };

    add_group("patch_embed", {{"patch_embed.w", m.patch_embed.w},
                              {"patch_embed.b", m.patch_embed.b}});
    for (std::size_t i = 0; i < m.enc_blocks.size(); ++i) {
        std::vector<NamedParamT<S>> ps;
        detail::collect_block(ps, "enc." + std::to_string(i), m.enc_blocks[i]);
        if (i + 1 == m.enc_blocks.size()) {
            ps.push_back({"enc.norm.g", m.enc_norm_g});
            ps.push_back({"enc.norm.b", m.enc_norm_b});
        }
        add_group("enc." + std::to_string(i), std::move(ps));
    }
    add_group("dec.embed", {{"dec.embed.w", m.dec_embed.w},
                            {"dec.embed.b", m.dec_embed.b},
                            {"mask_token", m.mask_token}});
    for (std::size_t i = 0; i < m.dec_blocks.size(); ++i) {
        std::vector<NamedParamT<S>> ps;
        detail::collect_block(ps, "dec." + std::to_string(i), m.dec_blocks[i]);
        add_group("dec." + std::to_string(i), std::move(ps));
    }
    add_group("head", {{"dec.norm.g", m.dec_norm_g},
                       {"dec.norm.b", m.dec_norm_b},
                       {"head.w", m.pred_head.w},
                       {"head.b", m.pred_head.b}});

    const std::size_t G = groups.size();
    for (auto& g : groups) g.lr = layer_wise_lr(base_lr, decay, g.group_index, G);
    return groups;
}

namespace detail {

template <class S>
TensorT<S> linear(const TensorT<S>& x, const LinearT<S>& l) {
    return add(matmul(x, l.w), l.b);
}

template <class S>
TensorT<S> attention(const TensorT<S>& x, const BlockT<S>& blk, std::size_t heads) {
    const std::size_t d = x.dim(1);
    const std::size_t dh = d / heads;
    auto q = split_heads(linear(x, blk.wq), heads);
    auto k = split_heads(linear(x, blk.wk), heads);
    auto v = split_heads(linear(x, blk.wv), heads);
    auto scores = mul_scalar(matmul(q, transpose(k)),
                             S(1.0 / std::sqrt(static_cast<double>(dh))));
    auto attn = softmax(scores, -1);
    auto ctx = merge_heads(matmul(attn, v));
    return linear(ctx, blk.wo);
}

template <class S>
TensorT<S> block_forward(const TensorT<S>& x, const BlockT<S>& blk, std::size_t heads) {
    auto h = layer_norm(x, blk.ln1_g, blk.ln1_b);
    auto y = add(x, attention(h, blk, heads));
    auto h2 = layer_norm(y, blk.ln2_g, blk.ln2_b);
    auto mlp = linear(gelu(linear(h2, blk.fc1)), blk.fc2);
    return add(y, mlp);
}

}  // namespace detail

// Embed patches, optionally drop masked tokens, run the encoder stack.
// `plan == nullptr` keeps every token.
template <class S>
TensorT<S> encode(const GeneratorModelT<S>& m, const TensorT<S>& patches,
                  const MaskPlan* plan = nullptr) {
    const std::size_t P = m.config.grid.num_patches();
    if (patches.rank() != 2 || patches.dim(0) != P ||
        patches.dim(1) != m.config.grid.patch_dim())
        throw ShapeError("encode: expected patches of shape [" + std::to_string(P) + ", " +
                         std::to_string(m.config.grid.patch_dim()) + "], got " +
                         shape_str(patches.shape()));
    auto x = add(detail::linear(patches, m.patch_embed), m.enc_pos);
    if (plan != nullptr) {
        if (plan->num_patches != P)
            throw ShapeError("encode: mask plan covers " + std::to_string(plan->num_patches) +
                             " patches, model expects " + std::to_string(P));
        x = take_rows(x, plan->keep_indices);
    }
    for (const auto& blk : m.enc_blocks)
        x = detail::block_forward(x, blk, m.config.enc_heads);
    return layer_norm(x, m.enc_norm_g, m.enc_norm_b);
}

// Map latents to the decoder width, re-insert mask tokens at masked positions,
// run the decoder stack, and predict every patch.
template <class S>
TensorT<S> decode(const GeneratorModelT<S>& m, const TensorT<S>& latents,
                  const MaskPlan* plan = nullptr) {
    const std::size_t P = m.config.grid.num_patches();
    const std::size_t expect = (plan != nullptr) ? plan->num_kept() : P;
    if (latents.rank() != 2 || latents.dim(0) != expect || latents.dim(1) != m.config.enc_dim)
        throw ShapeError("decode: expected latents of shape [" + std::to_string(expect) +
                         ", " + std::to_string(m.config.enc_dim) + "], got " +
                         shape_str(latents.shape()));
    if (plan != nullptr && plan->num_patches != P)
        throw ShapeError("decode: mask plan covers " + std::to_string(plan->num_patches) +
                         " patches, model expects " + std::to_string(P));
    auto x = detail::linear(latents, m.dec_embed);
    if (plan != nullptr && plan->num_masked() > 0) {
        auto tokens = tile_rows(m.mask_token, plan->num_masked());
        x = take_rows(concat_rows(x, tokens), plan->restore_order);
    }
    x = add(x, m.dec_pos);
    for (const auto& blk : m.dec_blocks)
        x = detail::block_forward(x, blk, m.config.dec_heads);
    x = layer_norm(x, m.dec_norm_g, m.dec_norm_b);
    return detail::linear(x, m.pred_head);
}

// Full image-to-image pass with no masking. In inference mode the result is
// clamped to [0, 1] and no graph is recorded.
template <class S>
TensorT<S> generate(const GeneratorModelT<S>& m, const TensorT<S>& cloudy,
                    bool training = false) {
    auto run = [&]() {
        auto patches = patchify(cloudy, m.config.grid);
        auto pred = decode(m, encode(m, patches));
        return unpatchify(pred, m.config.grid);
    };
    if (training) return run();
    NoGradGuardT<S> guard;
    return clamp(run(), S(0), S(1));
}

template <class S>
struct ReconstructionT {
    TensorT<S> pred;  // [P, patch_dim]
    MaskPlan plan;
};

using Reconstruction = ReconstructionT<float>;

// Masked autoencoding pass: mask, encode the visible tokens, predict all.
template <class S>
ReconstructionT<S> reconstruct(const GeneratorModelT<S>& m, const TensorT<S>& image,
                               double mask_ratio, std::uint64_t seed) {
    ReconstructionT<S> r;
    r.plan = make_mask_plan(m.config.grid.num_patches(), mask_ratio, seed);
    auto patches = patchify(image, m.config.grid);
    r.pred = decode(m, encode(m, patches, &r.plan), &r.plan);
    return r;
}

// Copy a model into another scalar type (used to evaluate the same weights
// in double precision).
template <class To, class From>
GeneratorModelT<To> cast_generator(const GeneratorModelT<From>& src) {
    GeneratorModelT<To> dst = init_generator<To>(src.config, 0);
    auto s = named_params(src);
    auto d = named_params(dst);
    for (std::size_t i = 0; i < s.size(); ++i) {
        auto& from = s[i].tensor.data();
        auto& to = d[i].tensor.data();
        for (std::size_t j = 0; j < from.size(); ++j) to[j] = static_cast<To>(from[j]);
    }
    return dst;
}

// Test hook: zero every transformer-block parameter so each block becomes an
// identity map and the encoder reduces to norm(embed + positions).
template <class S>
void zero_transformer_blocks(GeneratorModelT<S>& m) {
    auto zero_block = [](BlockT<S>& b) {
        for (TensorT<S>* t : {&b.ln1_g, &b.ln1_b, &b.wq.w, &b.wq.b, &b.wk.w, &b.wk.b,
                              &b.wv.w, &b.wv.b, &b.wo.w, &b.wo.b, &b.ln2_g, &b.ln2_b,
                              &b.fc1.w, &b.fc1.b, &b.fc2.w, &b.fc2.b})
            std::fill(t->data().begin(), t->data().end(), S(0));
    };
    for (auto& b : m.enc_blocks) zero_block(b);
    for (auto& b : m.dec_blocks) zero_block(b);
}

}  // namespace pgcr
