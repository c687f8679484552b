#pragma once

#include <cstdint>
#include <limits>
#include <numeric>
#include <vector>

#include "pgcr/rng.hpp"
#include "pgcr/tensor.hpp"

namespace pgcr {

// Central-difference verification of reverse-mode gradients.
//
// `f` must be callable on both TensorT<float> and TensorT<double> (a generic
// lambda over the shared op set) and return a scalar tensor. The analytic side
// runs the f32 implementation and its recorded backward; the numeric side
// re-evaluates f in double precision at perturbed points, so the difference
// quotient itself contributes almost no rounding noise and the comparison
// isolates errors in the backward code.
//
// Returns max over checked coordinates of |analytic - numeric| over
// max(1e-8, |analytic| + |numeric|). When x has more than `max_coords`
// entries, a seed-deterministic subset is checked.
template <class Fn>
double finite_diff_check(Fn&& f, const TensorT<float>& x, double h = 1e-3,
                         std::size_t max_coords = std::numeric_limits<std::size_t>::max(),
                         std::uint64_t sample_seed = 0) {
    if (!(h > 0.0)) throw ShapeError("finite_diff_check: h must be positive");

    TensorT<float> leaf = x.detach();
    leaf.set_requires_grad(true);
    auto& g32 = GraphT<float>::current();
    const bool was_recording = g32.recording();
    g32.clear();
    g32.set_recording(true);
    TensorT<float> y = f(leaf);
    if (y.numel() != 1)
        throw ShapeError("finite_diff_check: f must be scalar-valued, got " +
                         shape_str(y.shape()));
    g32.backward(y);
    leaf.ensure_grad();
    const std::vector<float> analytic = leaf.grad();
    g32.clear();
    g32.set_recording(was_recording);

    std::vector<std::size_t> coords(x.numel());
    std::iota(coords.begin(), coords.end(), std::size_t{0});
    if (coords.size() > max_coords) {
        Rng rng(derive_seed(sample_seed, coords.size()));
        for (std::size_t i = 0; i < max_coords; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(rng.below(coords.size() - i));
            std::swap(coords[i], coords[j]);
        }
        coords.resize(max_coords);
    }

    TensorT<double> xd = cast_tensor<double>(x);
    NoGradGuardT<double> no_grad;
    double worst = 0.0;
    for (std::size_t i : coords) {
        const double saved = xd.data()[i];
        xd.data()[i] = saved + h;
        const double fp = static_cast<double>(f(xd).item());
        xd.data()[i] = saved - h;
        const double fm = static_cast<double>(f(xd).item());
        xd.data()[i] = saved;
        const double numeric = (fp - fm) / (2.0 * h);
        const double a = static_cast<double>(analytic[i]);
        const double denom = std::max(1e-8, std::abs(a) + std::abs(numeric));
        worst = std::max(worst, std::abs(a - numeric) / denom);
    }
    return worst;
}

}  // namespace pgcr
