#pragma once

#include <png.h>

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "pgcr/errors.hpp"

namespace pgcr {

// Interleaved 8-bit RGB image, row-major.
struct ImageU8 {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t channels = 3;
    std::vector<std::uint8_t> values;

    static ImageU8 make(std::size_t w, std::size_t h) {
        ImageU8 img;
        img.width = w;
        img.height = h;
        img.values.assign(w * h * 3, 0);
        return img;
    }

    std::uint8_t& at(std::size_t y, std::size_t x, std::size_t c) {
        return values[(y * width + x) * channels + c];
    }
    std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
        return values[(y * width + x) * channels + c];
    }
    bool same_size(const ImageU8& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
    friend bool operator==(const ImageU8& a, const ImageU8& b) {
        return a.width == b.width && a.height == b.height && a.channels == b.channels &&
               a.values == b.values;
    }
};

namespace detail {

inline bool has_suffix(const std::string& s, const std::string& suffix) {
    return s.size() >= suffix.size() &&
           s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// Write-to-temp-then-rename so readers never observe a partial file.
template <class WriteFn>
void atomic_write(const std::string& path, WriteFn&& write_fn) {
    const std::string tmp = path + ".tmp";
    write_fn(tmp);
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        throw DataError("failed to move temporary file into place at " + path);
    }
}

}  // namespace detail

inline ImageU8 read_png(const std::string& path) {
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str()))
        throw DataError("cannot read PNG " + path + ": " + png.message);
    png.format = PNG_FORMAT_RGB;
    ImageU8 img = ImageU8::make(png.width, png.height);
    if (!png_image_finish_read(&png, nullptr, img.values.data(), 0, nullptr)) {
        std::string msg = png.message;
        png_image_free(&png);
        throw DataError("cannot decode PNG " + path + ": " + msg);
    }
    return img;
}

inline void write_png(const std::string& path, const ImageU8& img) {
    detail::atomic_write(path, [&](const std::string& tmp) {
        png_image png;
        std::memset(&png, 0, sizeof(png));
        png.version = PNG_IMAGE_VERSION;
        png.width = static_cast<png_uint_32>(img.width);
        png.height = static_cast<png_uint_32>(img.height);
        png.format = PNG_FORMAT_RGB;
        if (!png_image_write_to_file(&png, tmp.c_str(), 0, img.values.data(), 0, nullptr))
            throw DataError("cannot write PNG " + tmp + ": " + png.message);
    });
}

// Binary P6 PPM, for dependency-free fixtures.
inline ImageU8 read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::string magic;
    std::size_t w = 0, h = 0, maxval = 0;
    in >> magic;
    if (magic != "P6") throw DataError(path + " is not a binary PPM (P6) file");
    auto next_token = [&](std::size_t& out) {
        // Skip whitespace and '#' comments between header fields.
        for (;;) {
            int ch = in.peek();
            if (ch == '#') {
                std::string line;
                std::getline(in, line);
            } else if (std::isspace(ch)) {
                in.get();
            } else {
                break;
            }
        }
        if (!(in >> out)) throw DataError("malformed PPM header in " + path);
    };
    next_token(w);
    next_token(h);
    next_token(maxval);
    if (maxval != 255) throw DataError(path + ": only maxval 255 PPM supported");
    in.get();  // single whitespace after header
    ImageU8 img = ImageU8::make(w, h);
    in.read(reinterpret_cast<char*>(img.values.data()),
            static_cast<std::streamsize>(img.values.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.values.size()))
        throw DataError(path + ": truncated PPM pixel data");
    return img;
}

inline void write_ppm(const std::string& path, const ImageU8& img) {
    detail::atomic_write(path, [&](const std::string& tmp) {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot open " + tmp + " for writing");
        out << "P6\n" << img.width << " " << img.height << "\n255\n";
        out.write(reinterpret_cast<const char*>(img.values.data()),
                  static_cast<std::streamsize>(img.values.size()));
        if (!out) throw DataError("failed writing PPM " + tmp);
    });
}

// Dispatch on extension: .png or .ppm.
inline ImageU8 read_image(const std::string& path) {
    if (detail::has_suffix(path, ".png")) return read_png(path);
    if (detail::has_suffix(path, ".ppm")) return read_ppm(path);
    throw DataError("unsupported image extension: " + path);
}

inline void write_image(const std::string& path, const ImageU8& img) {
    if (detail::has_suffix(path, ".png")) return write_png(path, img);
    if (detail::has_suffix(path, ".ppm")) return write_ppm(path, img);
    throw DataError("unsupported image extension: " + path);
}

// Atomic whole-file text write (reports, CSV logs, manifests).
inline void write_text_file(const std::string& path, const std::string& content) {
    detail::atomic_write(path, [&](const std::string& tmp) {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw DataError("cannot open " + tmp + " for writing");
        out << content;
        if (!out) throw DataError("failed writing " + tmp);
    });
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return s;
}

}  // namespace pgcr
