#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <vector>

#include "pgcr/errors.hpp"
#include "pgcr/generator.hpp"
#include "pgcr/discriminator.hpp"

namespace pgcr {

// Every tunable of the pipeline as a flat key=value record. Files and CLI
// flags set the same keys; unknown keys are rejected.
struct RunConfig {
    std::string preset = "toy";  // last preset applied; sets geometry + dims
    std::size_t image_size = 64;
    std::size_t patch_size = 8;
    std::size_t channels = 3;
    std::size_t enc_dim = 64, enc_depth = 2, enc_heads = 4;
    std::size_t dec_dim = 32, dec_depth = 1, dec_heads = 4;
    std::vector<std::size_t> disc_hidden = {512, 256};
    double disc_lr_scale = 1.0;  // discriminator lr = base_lr * this
    double lambda_adv = 0.1;
    double base_lr = 1e-3;
    double llrd_decay = 0.75;
    double mask_ratio = 0.75;
    std::size_t batch_size = 8;
    std::size_t epochs = 30;
    std::size_t pretrain_epochs = 10;
    std::uint64_t seed = 42;
    std::string data_dir;
    std::string out_dir;
    std::string init = "random";  // checkpoint path, or "random"

    GeneratorConfig generator_config() const {
        GeneratorConfig g;
        g.grid = PatchGrid{image_size, patch_size, channels};
        g.enc_dim = enc_dim;
        g.enc_depth = enc_depth;
        g.enc_heads = enc_heads;
        g.dec_dim = dec_dim;
        g.dec_depth = dec_depth;
        g.dec_heads = dec_heads;
        return g;
    }

    DiscriminatorConfig discriminator_config() const {
        DiscriminatorConfig d;
        d.patch_dim = patch_size * patch_size * channels;
        d.hidden = disc_hidden;
        return d;
    }
};

namespace detail {

inline std::size_t parse_size(const std::string& key, const std::string& v) {
    try {
        // stoull accepts a leading '-' and wraps; reject anything non-digit.
        if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
            throw std::invalid_argument(v);
        std::size_t pos = 0;
        const unsigned long long x = std::stoull(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return static_cast<std::size_t>(x);
    } catch (const std::exception&) {
        throw UsageError("config key '" + key + "': expected a non-negative integer, got '" +
                         v + "'");
    }
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return x;
    } catch (const std::exception&) {
        throw UsageError("config key '" + key + "': expected a number, got '" + v + "'");
    }
}

inline std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& v) {
    std::vector<std::size_t> out;
    if (v.empty()) return out;  // empty list is valid (degenerate single-affine head)
    std::size_t pos = 0;
    while (pos <= v.size()) {
        std::size_t comma = v.find(',', pos);
        if (comma == std::string::npos) comma = v.size();
        out.push_back(parse_size(key, v.substr(pos, comma - pos)));
        pos = comma + 1;
    }
    return out;
}

inline std::string size_list_str(const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(v[i]);
    }
    return s;
}

inline std::string double_str(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

}  // namespace detail

// Applies preset geometry + model dims; other keys are untouched.
inline void apply_preset(RunConfig& c, const std::string& name) {
    GeneratorConfig g;
    if (name == "toy") {
        g = GeneratorConfig::toy();
    } else if (name == "full") {
        g = GeneratorConfig::full();
    } else {
        throw UsageError("unknown preset '" + name + "' (expected toy|full)");
    }
    c.preset = name;
    c.image_size = g.grid.image_size;
    c.patch_size = g.grid.patch_size;
    c.channels = g.grid.channels;
    c.enc_dim = g.enc_dim;
    c.enc_depth = g.enc_depth;
    c.enc_heads = g.enc_heads;
    c.dec_dim = g.dec_dim;
    c.dec_depth = g.dec_depth;
    c.dec_heads = g.dec_heads;
}

// Set one key. `preset` expands immediately, so later keys can override
// individual preset values (file order / flag order matters there).
inline void config_set(RunConfig& c, const std::string& key, const std::string& value) {
    using detail::parse_double;
    using detail::parse_size;
    if (key == "preset") {
        apply_preset(c, value);
    } else if (key == "image_size") {
        c.image_size = parse_size(key, value);
    } else if (key == "patch_size") {
        c.patch_size = parse_size(key, value);
    } else if (key == "channels") {
        c.channels = parse_size(key, value);
    } else if (key == "enc_dim") {
        c.enc_dim = parse_size(key, value);
    } else if (key == "enc_depth") {
        c.enc_depth = parse_size(key, value);
    } else if (key == "enc_heads") {
        c.enc_heads = parse_size(key, value);
    } else if (key == "dec_dim") {
        c.dec_dim = parse_size(key, value);
    } else if (key == "dec_depth") {
        c.dec_depth = parse_size(key, value);
    } else if (key == "dec_heads") {
        c.dec_heads = parse_size(key, value);
    } else if (key == "disc_hidden") {
        c.disc_hidden = detail::parse_size_list(key, value);
    } else if (key == "disc_lr_scale") {
        c.disc_lr_scale = parse_double(key, value);
    } else if (key == "lambda_adv") {
        c.lambda_adv = parse_double(key, value);
    } else if (key == "base_lr") {
        c.base_lr = parse_double(key, value);
    } else if (key == "llrd_decay") {
        c.llrd_decay = parse_double(key, value);
    } else if (key == "mask_ratio") {
        c.mask_ratio = parse_double(key, value);
    } else if (key == "batch_size") {
        c.batch_size = parse_size(key, value);
    } else if (key == "epochs") {
        c.epochs = parse_size(key, value);
    } else if (key == "pretrain_epochs") {
        c.pretrain_epochs = parse_size(key, value);
    } else if (key == "seed") {
        c.seed = parse_size(key, value);
    } else if (key == "data_dir") {
        c.data_dir = value;
    } else if (key == "out_dir") {
        c.out_dir = value;
    } else if (key == "init") {
        c.init = value;
    } else {
        throw UsageError("unknown config key '" + key + "'");
    }
}

// Canonical text form. `preset` leads (it expands on read), the rest is
// alphabetical; parsing this text reproduces the config exactly.
inline std::string serialize_config(const RunConfig& c) {
    std::string out;
    out += "preset=" + c.preset + "\n";
    out += "base_lr=" + detail::double_str(c.base_lr) + "\n";
    out += "batch_size=" + std::to_string(c.batch_size) + "\n";
    out += "channels=" + std::to_string(c.channels) + "\n";
    out += "data_dir=" + c.data_dir + "\n";
    out += "dec_depth=" + std::to_string(c.dec_depth) + "\n";
    out += "dec_dim=" + std::to_string(c.dec_dim) + "\n";
    out += "dec_heads=" + std::to_string(c.dec_heads) + "\n";
    out += "disc_hidden=" + detail::size_list_str(c.disc_hidden) + "\n";
    out += "disc_lr_scale=" + detail::double_str(c.disc_lr_scale) + "\n";
    out += "enc_depth=" + std::to_string(c.enc_depth) + "\n";
    out += "enc_dim=" + std::to_string(c.enc_dim) + "\n";
    out += "enc_heads=" + std::to_string(c.enc_heads) + "\n";
    out += "epochs=" + std::to_string(c.epochs) + "\n";
    out += "image_size=" + std::to_string(c.image_size) + "\n";
    out += "init=" + c.init + "\n";
    out += "lambda_adv=" + detail::double_str(c.lambda_adv) + "\n";
    out += "llrd_decay=" + detail::double_str(c.llrd_decay) + "\n";
    out += "mask_ratio=" + detail::double_str(c.mask_ratio) + "\n";
    out += "out_dir=" + c.out_dir + "\n";
    out += "patch_size=" + std::to_string(c.patch_size) + "\n";
    out += "pretrain_epochs=" + std::to_string(c.pretrain_epochs) + "\n";
    out += "seed=" + std::to_string(c.seed) + "\n";
    return out;
}

// Parse key=value text: blank lines and '#' comments allowed, keys applied
// in order, unknown keys rejected.
inline void parse_config_text(RunConfig& c, const std::string& text,
                              const std::string& origin) {
    std::size_t pos = 0;
    std::size_t lineno = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++lineno;
        const std::size_t first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos) continue;
        const std::size_t last = line.find_last_not_of(" \t\r");
        line = line.substr(first, last - first + 1);
        if (line.empty() || line[0] == '#') continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw UsageError(origin + ":" + std::to_string(lineno) +
                             ": expected key=value, got '" + line + "'");
        config_set(c, line.substr(0, eq), line.substr(eq + 1));
    }
}

}  // namespace pgcr
