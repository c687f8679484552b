#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>
#include <vector>

#include "pgcr/errors.hpp"
#include "pgcr/image.hpp"

namespace pgcr {

inline constexpr double kPsnrMax = 255.0;
inline constexpr std::size_t kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = (0.01 * 255.0) * (0.01 * 255.0);
inline constexpr double kSsimC2 = (0.03 * 255.0) * (0.03 * 255.0);
inline constexpr double kSsimC3 = kSsimC2 / 2.0;

// Mean squared error in the 8-bit domain: per channel over all pixels, then
// averaged across the three channels.
inline double image_mse(const ImageU8& x, const ImageU8& y) {
    if (!x.same_size(y))
        throw ShapeError("image_mse: image dimensions differ (" + std::to_string(x.width) +
                         "x" + std::to_string(x.height) + " vs " + std::to_string(y.width) +
                         "x" + std::to_string(y.height) + ")");
    const std::size_t pixels = x.width * x.height;
    double total = 0.0;
    for (std::size_t c = 0; c < x.channels; ++c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < pixels; ++i) {
            const double d = static_cast<double>(x.values[i * x.channels + c]) -
                             static_cast<double>(y.values[i * y.channels + c]);
            acc += d * d;
        }
        total += acc / static_cast<double>(pixels);
    }
    return total / static_cast<double>(x.channels);
}

// Peak signal-to-noise ratio in dB; identical images give +infinity.
inline double psnr(const ImageU8& x, const ImageU8& y) {
    const double mse = image_mse(x, y);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(kPsnrMax * kPsnrMax / mse);
}

namespace detail {

inline const std::vector<double>& ssim_window() {
    static const std::vector<double> w = [] {
        std::vector<double> g(kSsimWindow);
        const double center = (kSsimWindow - 1) / 2.0;
        for (std::size_t i = 0; i < kSsimWindow; ++i) {
            const double d = static_cast<double>(i) - center;
            g[i] = std::exp(-d * d / (2.0 * kSsimSigma * kSsimSigma));
        }
        std::vector<double> w2(kSsimWindow * kSsimWindow);
        double total = 0.0;
        for (std::size_t i = 0; i < kSsimWindow; ++i)
            for (std::size_t j = 0; j < kSsimWindow; ++j) {
                w2[i * kSsimWindow + j] = g[i] * g[j];
                total += g[i] * g[j];
            }
        for (auto& v : w2) v /= total;
        return w2;
    }();
    return w;
}

}  // namespace detail

// Structural similarity: Gaussian-weighted 11x11 windows (sigma 1.5) slid over
// every valid position of each channel; luminance, contrast, and structure
// factors multiplied per window; the score is the mean over windows and
// channels.
inline double ssim(const ImageU8& x, const ImageU8& y) {
    if (!x.same_size(y))
        throw ShapeError("ssim: image dimensions differ");
    if (x.width < kSsimWindow || x.height < kSsimWindow)
        throw ShapeError("ssim: image " + std::to_string(x.width) + "x" +
                         std::to_string(x.height) + " smaller than the " +
                         std::to_string(kSsimWindow) + "-pixel window");
    const auto& w = detail::ssim_window();
    const std::size_t oy_end = x.height - kSsimWindow + 1;
    const std::size_t ox_end = x.width - kSsimWindow + 1;
    double channel_sum = 0.0;
    for (std::size_t c = 0; c < x.channels; ++c) {
        double window_sum = 0.0;
        for (std::size_t oy = 0; oy < oy_end; ++oy)
            for (std::size_t ox = 0; ox < ox_end; ++ox) {
                double mx = 0.0, my = 0.0, mxx = 0.0, myy = 0.0, mxy = 0.0;
                for (std::size_t i = 0; i < kSsimWindow; ++i)
                    for (std::size_t j = 0; j < kSsimWindow; ++j) {
                        const double wij = w[i * kSsimWindow + j];
                        const double a = x.at(oy + i, ox + j, c);
                        const double b = y.at(oy + i, ox + j, c);
                        mx += wij * a;
                        my += wij * b;
                        mxx += wij * a * a;
                        myy += wij * b * b;
                        mxy += wij * a * b;
                    }
                const double vx = std::max(0.0, mxx - mx * mx);
                const double vy = std::max(0.0, myy - my * my);
                const double cov = mxy - mx * my;
                const double sx = std::sqrt(vx);
                const double sy = std::sqrt(vy);
                const double lum = (2.0 * mx * my + kSsimC1) / (mx * mx + my * my + kSsimC1);
                const double con = (2.0 * sx * sy + kSsimC2) / (vx + vy + kSsimC2);
                const double str = (cov + kSsimC3) / (sx * sy + kSsimC3);
                window_sum += lum * con * str;
            }
        channel_sum += window_sum / static_cast<double>(oy_end * ox_end);
    }
    return channel_sum / static_cast<double>(x.channels);
}

struct MetricRow {
    std::string id;
    double psnr = 0.0;
    double ssim = 0.0;
};

// Per-image rows plus dataset means. +inf PSNR rows are kept in `rows` but
// excluded from mean_psnr, with their count recorded.
struct MetricReport {
    std::vector<MetricRow> rows;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    std::size_t inf_psnr_count = 0;
};

inline MetricReport summarize_metrics(std::vector<MetricRow> rows) {
    MetricReport r;
    r.rows = std::move(rows);
    double psnr_sum = 0.0, ssim_sum = 0.0;
    std::size_t finite = 0;
    for (const auto& row : r.rows) {
        if (std::isinf(row.psnr)) {
            ++r.inf_psnr_count;
        } else {
            psnr_sum += row.psnr;
            ++finite;
        }
        ssim_sum += row.ssim;
    }
    r.mean_psnr = finite ? psnr_sum / static_cast<double>(finite) : 0.0;
    r.mean_ssim = r.rows.empty() ? 0.0 : ssim_sum / static_cast<double>(r.rows.size());
    return r;
}

inline std::string metric_csv(const MetricReport& r) {
    std::string out = "id,psnr,ssim\n";
    char buf[160];
    for (const auto& row : r.rows) {
        std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f\n", row.id.c_str(), row.psnr, row.ssim);
        out += buf;
    }
    std::snprintf(buf, sizeof(buf), "mean,%.6f,%.6f\n", r.mean_psnr, r.mean_ssim);
    out += buf;
    return out;
}

// JSON report; +inf PSNR is emitted as null (counted in inf_psnr_count).
inline std::string metric_json(const MetricReport& r) {
    auto num = [](double v) {
        if (std::isinf(v)) return std::string("null");
        char buf[48];
        std::snprintf(buf, sizeof(buf), "%.6f", v);
        return std::string(buf);
    };
    std::string out = "{\n  \"rows\": [\n";
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
        const auto& row = r.rows[i];
        out += "    {\"id\": \"" + row.id + "\", \"psnr\": " + num(row.psnr) +
               ", \"ssim\": " + num(row.ssim) + "}";
        out += (i + 1 < r.rows.size()) ? ",\n" : "\n";
    }
    out += "  ],\n";
    out += "  \"mean_psnr\": " + num(r.mean_psnr) + ",\n";
    out += "  \"mean_ssim\": " + num(r.mean_ssim) + ",\n";
    out += "  \"inf_psnr_count\": " + std::to_string(r.inf_psnr_count) + "\n}\n";
    return out;
}

}  // namespace pgcr
