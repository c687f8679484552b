#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pgcr/errors.hpp"
#include "pgcr/image.hpp"
#include "pgcr/noise.hpp"
#include "pgcr/rng.hpp"
#include "pgcr/tensor.hpp"

namespace pgcr {

// One cloudy/clean training example, optionally with a binary cloud mask.
struct ImagePair {
    ImageU8 cloudy;
    ImageU8 clean;
    std::optional<ImageU8> mask;
    std::string id;
};

// On-disk location of a pair; pixels are loaded on demand.
struct PairEntry {
    std::string id;
    std::string cloudy_path;
    std::string clean_path;
    std::string mask_path;  // empty when the dataset has no masks
};

struct DatasetSplit {
    std::vector<PairEntry> train;
    std::vector<PairEntry> val;
    std::vector<PairEntry> test;
    std::uint64_t seed = 0;  // seed used for the val carve-out (0 = deterministic stride)
};

struct CloudParamsRange {
    double coverage_lo = 0.3;
    double coverage_hi = 0.5;
    std::size_t octaves = 4;
    double softness = 0.15;   // alpha ramp width in noise units; 0 = hard threshold
    double brightness = 1.0;  // cloud whiteness
};

inline ImagePair load_pair(const PairEntry& e) {
    ImagePair p;
    p.id = e.id;
    p.cloudy = read_image(e.cloudy_path);
    p.clean = read_image(e.clean_path);
    if (!p.cloudy.same_size(p.clean))
        throw DataError("pair " + e.id + ": cloudy is " + std::to_string(p.cloudy.width) +
                        "x" + std::to_string(p.cloudy.height) + " but label is " +
                        std::to_string(p.clean.width) + "x" + std::to_string(p.clean.height));
    if (!e.mask_path.empty()) {
        p.mask = read_image(e.mask_path);
        if (!p.mask->same_size(p.clean))
            throw DataError("pair " + e.id + ": mask dimensions differ from the images");
    }
    return p;
}

inline std::vector<ImagePair> load_pairs(const std::vector<PairEntry>& entries) {
    std::vector<ImagePair> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(load_pair(e));
    return out;
}

enum class RiceVariant { rice1, rice2 };

namespace detail {

inline std::vector<std::string> list_image_files(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw DataError("missing dataset directory " + dir);
    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        if (has_suffix(name, ".png") || has_suffix(name, ".ppm")) names.push_back(name);
    }
    std::sort(names.begin(), names.end());
    return names;
}

// Deterministic validation carve-out: every 5th training-pool pair (offset 0),
// capped at floor(pool/5) picks.
inline void carve_val(std::vector<PairEntry>& pool, std::vector<PairEntry>& train,
                      std::vector<PairEntry>& val) {
    const std::size_t cap = pool.size() / 5;
    for (std::size_t i = 0; i < pool.size(); ++i) {
        if (i % 5 == 0 && val.size() < cap)
            val.push_back(pool[i]);
        else
            train.push_back(pool[i]);
    }
}

}  // namespace detail

// Load a RICE-layout dataset: <root>/cloud + <root>/label (+ <root>/mask for
// the second variant), filenames matching across directories. Pairs are
// sorted by filename; the first 400 (RICE1) / 588 (RICE2) form the training
// pool and the remainder the test set; every 5th pool pair becomes validation.
inline DatasetSplit load_rice(const std::string& root, RiceVariant variant) {
    namespace fs = std::filesystem;
    const std::string cloud_dir = (fs::path(root) / "cloud").string();
    const std::string label_dir = (fs::path(root) / "label").string();
    const std::string mask_dir = (fs::path(root) / "mask").string();
    const bool want_mask = variant == RiceVariant::rice2;

    const auto cloud_names = detail::list_image_files(cloud_dir);
    const auto label_names = detail::list_image_files(label_dir);
    for (const auto& n : label_names)
        if (!std::binary_search(cloud_names.begin(), cloud_names.end(), n))
            throw DataError("orphan label image with no cloudy counterpart: " +
                            (fs::path(label_dir) / n).string());

    std::vector<PairEntry> pairs;
    for (const auto& n : cloud_names) {
        if (!std::binary_search(label_names.begin(), label_names.end(), n))
            throw DataError("orphan cloudy image with no label counterpart: " +
                            (fs::path(cloud_dir) / n).string());
        PairEntry e;
        e.id = fs::path(n).stem().string();
        e.cloudy_path = (fs::path(cloud_dir) / n).string();
        e.clean_path = (fs::path(label_dir) / n).string();
        if (want_mask) {
            const auto mp = fs::path(mask_dir) / n;
            if (!fs::is_regular_file(mp))
                throw DataError("missing mask for pair: " + mp.string());
            e.mask_path = mp.string();
        }
        pairs.push_back(std::move(e));
    }

    const std::size_t train_n = variant == RiceVariant::rice1 ? 400 : 588;
    const std::size_t pool_n = std::min(train_n, pairs.size());
    std::vector<PairEntry> pool(pairs.begin(), pairs.begin() + pool_n);

    DatasetSplit split;
    split.test.assign(pairs.begin() + pool_n, pairs.end());
    detail::carve_val(pool, split.train, split.val);
    return split;
}

// ---------------------------------------------------------------------------
// Synthetic data generation
// ---------------------------------------------------------------------------

namespace detail {

struct Palette {
    std::uint8_t stops[4][3] = {
        {36, 68, 112},    // water
        {52, 98, 62},     // vegetation
        {134, 118, 84},   // bare earth
        {210, 206, 196},  // rock / sand
    };

    void color(double h, double out[3]) const {
        const double t = std::clamp(h, 0.0, 1.0) * 3.0;
        const std::size_t i = std::min<std::size_t>(2, static_cast<std::size_t>(t));
        const double f = t - static_cast<double>(i);
        for (std::size_t c = 0; c < 3; ++c)
            out[c] = stops[i][c] + (stops[i + 1][c] - stops[i][c]) * f;
    }
};

}  // namespace detail

// Procedural cloud-free terrain: fractal value noise through a 4-color
// palette with smooth boundaries.
inline ImageU8 synth_clean_image(std::size_t size, std::uint64_t seed) {
    ImageU8 img = ImageU8::make(size, size);
    detail::Palette palette;
    const double cells = 4.0;
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
            const double h = fractal_noise(seed, (x + 0.5) * cells / size,
                                           (y + 0.5) * cells / size, 4);
            // Stretch the octave sum (which concentrates near 0.5) to use the
            // full palette range.
            const double stretched = std::clamp((h - 0.5) * 2.2 + 0.5, 0.0, 1.0);
            double rgb[3];
            palette.color(stretched, rgb);
            for (std::size_t c = 0; c < 3; ++c)
                img.at(y, x, c) = static_cast<std::uint8_t>(std::nearbyint(rgb[c]));
        }
    return img;
}

// Cloud opacity field: fractal noise thresholded at the (1 - coverage)
// quantile so the covered fraction tracks `coverage`, with a smoothstep ramp
// of width `softness` around the threshold.
inline std::vector<double> synth_cloud_alpha(std::size_t size, double coverage,
                                             std::size_t octaves, double softness,
                                             std::uint64_t seed) {
    std::vector<double> alpha(size * size, 0.0);
    if (coverage <= 0.0) return alpha;
    if (coverage >= 1.0) {
        std::fill(alpha.begin(), alpha.end(), 1.0);
        return alpha;
    }
    const double cells = 3.0;
    std::vector<double> field(size * size);
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x)
            field[y * size + x] = fractal_noise(seed, (x + 0.5) * cells / size,
                                                (y + 0.5) * cells / size, octaves);
    std::vector<double> sorted = field;
    const auto idx = static_cast<std::size_t>(
        std::nearbyint((1.0 - coverage) * static_cast<double>(sorted.size() - 1)));
    std::nth_element(sorted.begin(), sorted.begin() + idx, sorted.end());
    const double threshold = sorted[idx];
    for (std::size_t i = 0; i < field.size(); ++i) {
        if (softness <= 0.0) {
            alpha[i] = field[i] >= threshold ? 1.0 : 0.0;
        } else {
            const double t = std::clamp((field[i] - threshold) / softness + 0.5, 0.0, 1.0);
            alpha[i] = t * t * (3.0 - 2.0 * t);
        }
    }
    return alpha;
}

// One synthetic pair: clean terrain, alpha-blended cloud layer, binary mask.
inline ImagePair synth_pair(std::size_t size, double coverage, const CloudParamsRange& params,
                            std::uint64_t seed, std::string id) {
    ImagePair p;
    p.id = std::move(id);
    p.clean = synth_clean_image(size, derive_seed(seed, 1));
    const auto alpha = synth_cloud_alpha(size, coverage, params.octaves, params.softness,
                                         derive_seed(seed, 2));
    p.cloudy = p.clean;
    ImageU8 mask = ImageU8::make(size, size);
    for (std::size_t y = 0; y < size; ++y)
        for (std::size_t x = 0; x < size; ++x) {
            const double a = alpha[y * size + x];
            const std::uint8_t m = a > 0.5 ? 255 : 0;
            for (std::size_t c = 0; c < 3; ++c) {
                mask.at(y, x, c) = m;
                if (a > 0.0) {
                    const double v = a * params.brightness * 255.0 +
                                     (1.0 - a) * static_cast<double>(p.clean.at(y, x, c));
                    p.cloudy.at(y, x, c) = static_cast<std::uint8_t>(
                        std::nearbyint(std::clamp(v, 0.0, 255.0)));
                }
            }
        }
    p.mask = std::move(mask);
    return p;
}

struct SyntheticDataset {
    std::vector<ImagePair> pairs;
    std::vector<std::size_t> train, val, test;  // indices into `pairs`
};

// 64% / 16% / 20% split by generation order.
inline void synthetic_split_sizes(std::size_t n, std::size_t& train_n, std::size_t& val_n) {
    train_n = n * 16 / 25;
    val_n = n * 4 / 25;
}

// Deterministic synthetic dataset: per-image coverage drawn uniformly from
// the configured range, everything derived from `seed`.
inline SyntheticDataset gen_synthetic_dataset(std::size_t n, std::size_t size,
                                              const CloudParamsRange& params,
                                              std::uint64_t seed) {
    if (n < 5) throw UsageError("synthetic dataset needs at least 5 images");
    if (size == 0 || size % 8 != 0)
        throw UsageError("synthetic image size must be a positive multiple of 8");
    if (params.coverage_lo < 0.0 || params.coverage_hi > 1.0 ||
        params.coverage_lo > params.coverage_hi)
        throw UsageError("coverage range must satisfy 0 <= lo <= hi <= 1");
    SyntheticDataset ds;
    ds.pairs.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint64_t img_seed = derive_seed(seed, 100 + i);
        Rng rng(derive_seed(img_seed, 0));
        const double coverage =
            params.coverage_lo + rng.uniform() * (params.coverage_hi - params.coverage_lo);
        char name[32];
        std::snprintf(name, sizeof(name), "%04zu", i);
        ds.pairs.push_back(synth_pair(size, coverage, params, img_seed, name));
    }
    std::size_t train_n = 0, val_n = 0;
    synthetic_split_sizes(n, train_n, val_n);
    for (std::size_t i = 0; i < n; ++i) {
        if (i < train_n)
            ds.train.push_back(i);
        else if (i < train_n + val_n)
            ds.val.push_back(i);
        else
            ds.test.push_back(i);
    }
    return ds;
}

// Write a synthetic dataset in the RICE directory layout plus a split manifest.
inline void save_synthetic_dataset(const std::string& root, const SyntheticDataset& ds) {
    namespace fs = std::filesystem;
    std::error_code ec;
    for (const char* sub : {"cloud", "label", "mask"}) {
        fs::create_directories(fs::path(root) / sub, ec);
        if (ec) throw DataError("cannot create directory " + (fs::path(root) / sub).string());
    }
    auto split_of = [&](std::size_t i) {
        if (std::find(ds.train.begin(), ds.train.end(), i) != ds.train.end()) return "train";
        if (std::find(ds.val.begin(), ds.val.end(), i) != ds.val.end()) return "val";
        return "test";
    };
    std::string manifest = "id,split\n";
    for (std::size_t i = 0; i < ds.pairs.size(); ++i) {
        const auto& p = ds.pairs[i];
        write_png((fs::path(root) / "cloud" / (p.id + ".png")).string(), p.cloudy);
        write_png((fs::path(root) / "label" / (p.id + ".png")).string(), p.clean);
        if (p.mask)
            write_png((fs::path(root) / "mask" / (p.id + ".png")).string(), *p.mask);
        manifest += p.id + "," + split_of(i) + "\n";
    }
    write_text_file((fs::path(root) / "manifest.csv").string(), manifest);
}

// Rebuild the split of a saved synthetic dataset from its manifest.
inline DatasetSplit load_synthetic(const std::string& root) {
    namespace fs = std::filesystem;
    const std::string manifest_path = (fs::path(root) / "manifest.csv").string();
    const std::string text = read_text_file(manifest_path);
    DatasetSplit split;
    std::size_t pos = 0;
    bool header = true;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        const std::string line = text.substr(pos, eol - pos);
        pos = eol + 1;
        if (line.empty()) continue;
        if (header) {
            if (line != "id,split") throw DataError("malformed manifest header in " + manifest_path);
            header = false;
            continue;
        }
        const std::size_t comma = line.find(',');
        if (comma == std::string::npos)
            throw DataError("malformed manifest line in " + manifest_path + ": " + line);
        PairEntry e;
        e.id = line.substr(0, comma);
        const std::string which = line.substr(comma + 1);
        e.cloudy_path = (fs::path(root) / "cloud" / (e.id + ".png")).string();
        e.clean_path = (fs::path(root) / "label" / (e.id + ".png")).string();
        const auto mp = fs::path(root) / "mask" / (e.id + ".png");
        if (fs::is_regular_file(mp)) e.mask_path = mp.string();
        if (which == "train")
            split.train.push_back(std::move(e));
        else if (which == "val")
            split.val.push_back(std::move(e));
        else if (which == "test")
            split.test.push_back(std::move(e));
        else
            throw DataError("unknown split '" + which + "' in " + manifest_path);
    }
    return split;
}

// Auto-detecting loader: a manifest means synthetic, otherwise RICE.
inline DatasetSplit load_dataset(const std::string& root, const std::string& variant) {
    namespace fs = std::filesystem;
    if (variant == "synthetic") return load_synthetic(root);
    if (variant == "rice1") return load_rice(root, RiceVariant::rice1);
    if (variant == "rice2") return load_rice(root, RiceVariant::rice2);
    if (variant == "auto") {
        if (fs::is_regular_file(fs::path(root) / "manifest.csv")) return load_synthetic(root);
        return load_rice(root, fs::is_directory(fs::path(root) / "mask") ? RiceVariant::rice2
                                                                         : RiceVariant::rice1);
    }
    throw UsageError("unknown dataset variant '" + variant +
                     "' (expected auto|rice1|rice2|synthetic)");
}

// ---------------------------------------------------------------------------
// Cropping and normalization
// ---------------------------------------------------------------------------

inline ImageU8 crop_window(const ImageU8& img, std::size_t ox, std::size_t oy, std::size_t s) {
    ImageU8 out = ImageU8::make(s, s);
    for (std::size_t y = 0; y < s; ++y)
        for (std::size_t x = 0; x < s; ++x)
            for (std::size_t c = 0; c < 3; ++c) out.at(y, x, c) = img.at(oy + y, ox + x, c);
    return out;
}

// Identical random window applied to cloudy, clean, and mask.
inline ImagePair random_crop(const ImagePair& pair, std::size_t s, std::uint64_t seed) {
    if (pair.cloudy.width < s || pair.cloudy.height < s)
        throw DataError("pair " + pair.id + ": image " + std::to_string(pair.cloudy.width) +
                        "x" + std::to_string(pair.cloudy.height) +
                        " is smaller than crop size " + std::to_string(s));
    Rng rng(seed);
    const std::size_t ox = rng.below(pair.cloudy.width - s + 1);
    const std::size_t oy = rng.below(pair.cloudy.height - s + 1);
    ImagePair out;
    out.id = pair.id;
    out.cloudy = crop_window(pair.cloudy, ox, oy, s);
    out.clean = crop_window(pair.clean, ox, oy, s);
    if (pair.mask) out.mask = crop_window(*pair.mask, ox, oy, s);
    return out;
}

inline ImagePair center_crop(const ImagePair& pair, std::size_t s) {
    if (pair.cloudy.width < s || pair.cloudy.height < s)
        throw DataError("pair " + pair.id + ": image " + std::to_string(pair.cloudy.width) +
                        "x" + std::to_string(pair.cloudy.height) +
                        " is smaller than crop size " + std::to_string(s));
    const std::size_t ox = (pair.cloudy.width - s) / 2;
    const std::size_t oy = (pair.cloudy.height - s) / 2;
    ImagePair out;
    out.id = pair.id;
    out.cloudy = crop_window(pair.cloudy, ox, oy, s);
    out.clean = crop_window(pair.clean, ox, oy, s);
    if (pair.mask) out.mask = crop_window(*pair.mask, ox, oy, s);
    return out;
}

// [0,255] bytes -> [0,1] floats, channels-first.
template <class S = float>
TensorT<S> normalize(const ImageU8& img) {
    TensorT<S> t = TensorT<S>::zeros({3, img.height, img.width});
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < img.height; ++y)
            for (std::size_t x = 0; x < img.width; ++x)
                t.data()[(c * img.height + y) * img.width + x] =
                    static_cast<S>(img.at(y, x, c)) / S(255);
    return t;
}

// Clamp to [0,1], scale to [0,255], round half-to-even.
template <class S>
ImageU8 denormalize(const TensorT<S>& t) {
    if (t.rank() != 3 || t.dim(0) != 3)
        throw ShapeError("denormalize: expected a [3, H, W] tensor, got " +
                         shape_str(t.shape()));
    const std::size_t h = t.dim(1), w = t.dim(2);
    ImageU8 img = ImageU8::make(w, h);
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const double v = std::clamp(
                    static_cast<double>(t.data()[(c * h + y) * w + x]), 0.0, 1.0);
                img.at(y, x, c) = static_cast<std::uint8_t>(std::nearbyint(v * 255.0));
            }
    return img;
}

}  // namespace pgcr
