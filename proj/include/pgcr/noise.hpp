#pragma once

#include <cmath>
#include <cstdint>

#include "pgcr/rng.hpp"

namespace pgcr {

namespace detail {

// Hash a lattice point to a reproducible value in [0, 1).
inline double lattice_value(std::uint64_t seed, std::int64_t ix, std::int64_t iy) {
    std::uint64_t h = seed;
    h ^= static_cast<std::uint64_t>(ix) * 0x9e3779b97f4a7c15ull;
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ull;
    h ^= static_cast<std::uint64_t>(iy) * 0x94d049bb133111ebull;
    h = (h ^ (h >> 27)) * 0xbf58476d1ce4e5b9ull;
    h ^= h >> 31;
    return static_cast<double>(h >> 11) * 0x1.0p-53;
}

inline double fade(double t) { return t * t * (3.0 - 2.0 * t); }

}  // namespace detail

// Smooth value noise: bilinear interpolation of hashed lattice values with a
// smoothstep fade. Output in [0, 1).
inline double value_noise(std::uint64_t seed, double x, double y) {
    const double fx = std::floor(x), fy = std::floor(y);
    const auto ix = static_cast<std::int64_t>(fx);
    const auto iy = static_cast<std::int64_t>(fy);
    const double tx = detail::fade(x - fx);
    const double ty = detail::fade(y - fy);
    const double v00 = detail::lattice_value(seed, ix, iy);
    const double v10 = detail::lattice_value(seed, ix + 1, iy);
    const double v01 = detail::lattice_value(seed, ix, iy + 1);
    const double v11 = detail::lattice_value(seed, ix + 1, iy + 1);
    const double a = v00 + (v10 - v00) * tx;
    const double b = v01 + (v11 - v01) * tx;
    return a + (b - a) * ty;
}

// Multi-octave fractal value noise, normalized back to [0, 1).
inline double fractal_noise(std::uint64_t seed, double x, double y, std::size_t octaves,
                            double lacunarity = 2.0, double gain = 0.5) {
    double sum = 0.0, amp = 1.0, norm = 0.0, freq = 1.0;
    for (std::size_t o = 0; o < octaves; ++o) {
        sum += amp * value_noise(derive_seed(seed, o), x * freq, y * freq);
        norm += amp;
        amp *= gain;
        freq *= lacunarity;
    }
    return norm > 0.0 ? sum / norm : 0.0;
}

}  // namespace pgcr
