#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

#include "pgcr/rng.hpp"
#include "pgcr/tensor.hpp"

namespace pgcr {

// Square-image patch layout shared by generator and discriminator.
struct PatchGrid {
    std::size_t image_size = 0;  // S, pixels per side
    std::size_t patch_size = 0;  // p, pixels per patch side
    std::size_t channels = 3;

    PatchGrid() = default;
    PatchGrid(std::size_t s, std::size_t p, std::size_t c = 3)
        : image_size(s), patch_size(p), channels(c) {
        if (s == 0 || p == 0 || c == 0 || s % p != 0)
            throw ShapeError("patch grid: image size " + std::to_string(s) +
                             " not divisible into " + std::to_string(p) + "-pixel patches");
    }

    std::size_t side() const { return image_size / patch_size; }
    std::size_t num_patches() const { return side() * side(); }
    std::size_t patch_dim() const { return patch_size * patch_size * channels; }

    bool operator==(const PatchGrid& o) const {
        return image_size == o.image_size && patch_size == o.patch_size && channels == o.channels;
    }
    bool operator!=(const PatchGrid& o) const { return !(*this == o); }

    std::string str() const {
        return std::to_string(image_size) + "/" + std::to_string(patch_size) + "x" +
               std::to_string(channels);
    }
};

// Which patches the encoder sees, and how to reassemble full order.
// keep_indices is sorted ascending; the shuffled layout is keep_indices
// followed by the (sorted) masked indices, and restore_order[i] is the row of
// patch i inside that layout.
struct MaskPlan {
    std::size_t num_patches = 0;
    std::vector<std::size_t> keep_indices;
    std::vector<std::uint8_t> mask;           // length P, 1 = masked
    std::vector<std::size_t> restore_order;   // length P

    std::size_t num_kept() const { return keep_indices.size(); }
    std::size_t num_masked() const { return num_patches - keep_indices.size(); }

    std::vector<std::size_t> masked_indices() const {
        std::vector<std::size_t> out;
        out.reserve(num_masked());
        for (std::size_t i = 0; i < num_patches; ++i)
            if (mask[i]) out.push_back(i);
        return out;
    }
};

// Uniform-random visible subset: a permutation prefix of size
// round((1 - mask_ratio) * P), driven entirely by the seed.
inline MaskPlan make_mask_plan(std::size_t num_patches, double mask_ratio, std::uint64_t seed) {
    if (!(mask_ratio >= 0.0 && mask_ratio < 1.0))
        throw ShapeError("mask_ratio must lie in [0, 1), got " + std::to_string(mask_ratio));
    const auto keep_count =
        static_cast<std::size_t>(std::lround((1.0 - mask_ratio) * static_cast<double>(num_patches)));
    std::vector<std::size_t> perm(num_patches);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(seed);
    rng.shuffle(perm);

    MaskPlan plan;
    plan.num_patches = num_patches;
    plan.keep_indices.assign(perm.begin(), perm.begin() + keep_count);
    std::sort(plan.keep_indices.begin(), plan.keep_indices.end());
    plan.mask.assign(num_patches, 1);
    for (std::size_t idx : plan.keep_indices) plan.mask[idx] = 0;

    plan.restore_order.assign(num_patches, 0);
    std::size_t row = 0;
    for (std::size_t idx : plan.keep_indices) plan.restore_order[idx] = row++;
    for (std::size_t i = 0; i < num_patches; ++i)
        if (plan.mask[i]) plan.restore_order[i] = row++;
    return plan;
}

// [C x S x S] image -> [P x p*p*C] patch rows, raster patch order. Within a
// patch the layout is channel-major: all of channel 0 row-major, then
// channel 1, then channel 2. Checkpoint portability depends on this order.
template <class S>
TensorT<S> patchify(const TensorT<S>& image, const PatchGrid& grid) {
    const Shape expect{grid.channels, grid.image_size, grid.image_size};
    if (image.shape() != expect)
        throw ShapeError("patchify: image " + shape_str(image.shape()) + " does not match grid " +
                         shape_str(expect));
    const std::size_t p = grid.patch_size, side = grid.side(), s = grid.image_size;
    const std::size_t pd = grid.patch_dim(), c = grid.channels;
    TensorT<S> out = TensorT<S>::zeros({grid.num_patches(), pd});
    const S* src = image.data().data();
    S* dst = out.data().data();
    for (std::size_t gy = 0; gy < side; ++gy)
        for (std::size_t gx = 0; gx < side; ++gx) {
            S* row = dst + (gy * side + gx) * pd;
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t py = 0; py < p; ++py)
                    for (std::size_t px = 0; px < p; ++px)
                        *row++ = src[ch * s * s + (gy * p + py) * s + (gx * p + px)];
        }
    const bool tracked = detail::track<S>({&image});
    detail::record_if(tracked, out, [ii = image.impl(), oi = out.impl(), grid]() {
        if (!ii->requires_grad) return;
        if (ii->grad.empty()) ii->grad.assign(ii->data.size(), S(0));
        const std::size_t p = grid.patch_size, side = grid.side(), s = grid.image_size;
        const std::size_t pd = grid.patch_dim();
        for (std::size_t gy = 0; gy < side; ++gy)
            for (std::size_t gx = 0; gx < side; ++gx) {
                const S* g = oi->grad.data() + (gy * side + gx) * pd;
                for (std::size_t ch = 0; ch < grid.channels; ++ch)
                    for (std::size_t py = 0; py < p; ++py)
                        for (std::size_t px = 0; px < p; ++px)
                            ii->grad[ch * s * s + (gy * p + py) * s + (gx * p + px)] += *g++;
            }
    });
    return out;
}

// Exact inverse of patchify.
template <class S>
TensorT<S> unpatchify(const TensorT<S>& patches, const PatchGrid& grid) {
    const Shape expect{grid.num_patches(), grid.patch_dim()};
    if (patches.shape() != expect)
        throw ShapeError("unpatchify: patches " + shape_str(patches.shape()) +
                         " do not match grid " + shape_str(expect));
    const std::size_t p = grid.patch_size, side = grid.side(), s = grid.image_size;
    const std::size_t pd = grid.patch_dim(), c = grid.channels;
    TensorT<S> out = TensorT<S>::zeros({c, s, s});
    const S* src = patches.data().data();
    S* dst = out.data().data();
    for (std::size_t gy = 0; gy < side; ++gy)
        for (std::size_t gx = 0; gx < side; ++gx) {
            const S* row = src + (gy * side + gx) * pd;
            for (std::size_t ch = 0; ch < c; ++ch)
                for (std::size_t py = 0; py < p; ++py)
                    for (std::size_t px = 0; px < p; ++px)
                        dst[ch * s * s + (gy * p + py) * s + (gx * p + px)] = *row++;
        }
    const bool tracked = detail::track<S>({&patches});
    detail::record_if(tracked, out, [pi = patches.impl(), oi = out.impl(), grid]() {
        if (!pi->requires_grad) return;
        if (pi->grad.empty()) pi->grad.assign(pi->data.size(), S(0));
        const std::size_t p = grid.patch_size, side = grid.side(), s = grid.image_size;
        const std::size_t pd = grid.patch_dim();
        for (std::size_t gy = 0; gy < side; ++gy)
            for (std::size_t gx = 0; gx < side; ++gx) {
                S* g = pi->grad.data() + (gy * side + gx) * pd;
                for (std::size_t ch = 0; ch < grid.channels; ++ch)
                    for (std::size_t py = 0; py < p; ++py)
                        for (std::size_t px = 0; px < p; ++px)
                            *g++ += oi->grad[ch * s * s + (gy * p + py) * s + (gx * p + px)];
            }
    });
    return out;
}

// Select the visible token rows for a fresh random plan.
template <class S>
std::pair<TensorT<S>, MaskPlan> random_masking(const TensorT<S>& tokens, double mask_ratio,
                                               std::uint64_t seed) {
    if (tokens.rank() != 2)
        throw ShapeError("random_masking: rank-2 token matrix required, got " +
                         shape_str(tokens.shape()));
    MaskPlan plan = make_mask_plan(tokens.shape()[0], mask_ratio, seed);
    TensorT<S> visible = take_rows(tokens, plan.keep_indices);
    return {std::move(visible), std::move(plan)};
}

namespace detail {

// 1D sin-cos table: d/2 sine entries followed by d/2 cosine entries.
inline void sincos_1d(double pos, std::size_t d, double* out) {
    const std::size_t half = d / 2;
    for (std::size_t i = 0; i < half; ++i) {
        const double omega = 1.0 / std::pow(10000.0, static_cast<double>(i) / half);
        out[i] = std::sin(pos * omega);
        out[half + i] = std::cos(pos * omega);
    }
}

}  // namespace detail

// Fixed 2D sine-cosine positional embedding: the first d/2 columns encode the
// patch row, the last d/2 the patch column. Not learned, never in checkpoints.
template <class S>
TensorT<S> sincos_positional_embedding(const PatchGrid& grid, std::size_t d) {
    if (d == 0 || d % 4 != 0)
        throw ShapeError("positional embedding width " + std::to_string(d) +
                         " must be divisible by 4");
    const std::size_t side = grid.side();
    TensorT<S> out = TensorT<S>::zeros({grid.num_patches(), d});
    std::vector<double> buf(d / 2);
    for (std::size_t gy = 0; gy < side; ++gy)
        for (std::size_t gx = 0; gx < side; ++gx) {
            S* row = out.data().data() + (gy * side + gx) * d;
            detail::sincos_1d(static_cast<double>(gy), d / 2, buf.data());
            for (std::size_t i = 0; i < d / 2; ++i) row[i] = static_cast<S>(buf[i]);
            detail::sincos_1d(static_cast<double>(gx), d / 2, buf.data());
            for (std::size_t i = 0; i < d / 2; ++i) row[d / 2 + i] = static_cast<S>(buf[i]);
        }
    return out;
}

}  // namespace pgcr
