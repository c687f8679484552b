#pragma once

#include <bit>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pgcr/config.hpp"
#include "pgcr/discriminator.hpp"
#include "pgcr/errors.hpp"
#include "pgcr/generator.hpp"
#include "pgcr/image.hpp"
#include "pgcr/tensor.hpp"

namespace pgcr {

// Binary model snapshot. Byte layout (all integers little-endian):
//   magic "PGCR" | u32 version | u32 kind (1=generator, 2=discriminator)
//   u64 config length | config bytes (canonical key=value text)
//   u64 tensor count
//   per tensor: u64 name length | name bytes | u32 rank | rank x u64 dims
//               | numel x f32 (row-major)
inline constexpr char kCheckpointMagic[4] = {'P', 'G', 'C', 'R'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::uint32_t version = kCheckpointVersion;
    std::string kind;  // "generator" | "discriminator"
    std::string config_text;
    std::vector<std::pair<std::string, Tensor>> tensors;
};

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct ByteReader {
    const std::string& buf;
    std::size_t pos = 0;
    const std::string& path;

    void need(std::size_t n) const {
        if (pos + n > buf.size())
            throw DataError("truncated checkpoint " + path + " (needed " + std::to_string(n) +
                            " bytes at offset " + std::to_string(pos) + ")");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

inline std::uint32_t kind_tag(const std::string& kind, const std::string& context) {
    if (kind == "generator") return 1;
    if (kind == "discriminator") return 2;
    throw DataError(context + ": unknown model kind '" + kind + "'");
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::string out;
    out.append(kCheckpointMagic, 4);
    detail::put_u32(out, ckpt.version);
    detail::put_u32(out, detail::kind_tag(ckpt.kind, "save_checkpoint"));
    detail::put_u64(out, ckpt.config_text.size());
    out += ckpt.config_text;
    detail::put_u64(out, ckpt.tensors.size());
    for (const auto& [name, tensor] : ckpt.tensors) {
        detail::put_u64(out, name.size());
        out += name;
        detail::put_u32(out, static_cast<std::uint32_t>(tensor.rank()));
        for (std::size_t d : tensor.shape()) detail::put_u64(out, d);
        for (float v : tensor.data()) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
    }
    write_text_file(path, out);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    const std::string buf = read_text_file(path);
    detail::ByteReader r{buf, 0, path};
    const std::string magic = r.bytes(4);
    if (magic != std::string(kCheckpointMagic, 4))
        throw DataError(path + " is not a model checkpoint (bad magic)");
    Checkpoint ckpt;
    ckpt.version = r.u32();
    if (ckpt.version != kCheckpointVersion)
        throw DataError(path + ": unsupported checkpoint version " +
                        std::to_string(ckpt.version) + " (expected " +
                        std::to_string(kCheckpointVersion) + ")");
    const std::uint32_t kind = r.u32();
    if (kind == 1)
        ckpt.kind = "generator";
    else if (kind == 2)
        ckpt.kind = "discriminator";
    else
        throw DataError(path + ": unknown model kind tag " + std::to_string(kind));
    ckpt.config_text = r.bytes(r.u64());
    const std::uint64_t count = r.u64();
    for (std::uint64_t t = 0; t < count; ++t) {
        const std::string name = r.bytes(r.u64());
        const std::uint32_t rank = r.u32();
        Shape shape;
        std::size_t numel = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            shape.push_back(static_cast<std::size_t>(r.u64()));
            numel *= shape.back();
        }
        std::vector<float> data(numel);
        for (auto& v : data) v = std::bit_cast<float>(r.u32());
        ckpt.tensors.emplace_back(name, Tensor::from_data(shape, std::move(data)));
    }
    if (r.pos != buf.size())
        throw DataError(path + ": trailing bytes after checkpoint payload");
    return ckpt;
}

inline RunConfig checkpoint_config(const Checkpoint& ckpt) {
    RunConfig c;
    parse_config_text(c, ckpt.config_text, "checkpoint config");
    return c;
}

inline Checkpoint generator_checkpoint(const GeneratorModel& model, const RunConfig& config) {
    Checkpoint ckpt;
    ckpt.kind = "generator";
    ckpt.config_text = serialize_config(config);
    for (const auto& p : named_params(model)) ckpt.tensors.emplace_back(p.name, p.tensor);
    return ckpt;
}

inline Checkpoint discriminator_checkpoint(const DiscriminatorModel& model,
                                           const RunConfig& config) {
    Checkpoint ckpt;
    ckpt.kind = "discriminator";
    ckpt.config_text = serialize_config(config);
    for (const auto& p : named_params(model)) ckpt.tensors.emplace_back(p.name, p.tensor);
    return ckpt;
}

namespace detail {

template <class Model>
void fill_params_from_checkpoint(Model& model, const Checkpoint& ckpt,
                                 const std::string& what) {
    auto params = named_params(model);
    if (params.size() != ckpt.tensors.size())
        throw DataError(what + ": checkpoint holds " + std::to_string(ckpt.tensors.size()) +
                        " tensors but the model has " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& [name, tensor] = ckpt.tensors[i];
        if (name != params[i].name)
            throw DataError(what + ": tensor " + std::to_string(i) + " is '" + name +
                            "', expected '" + params[i].name + "'");
        if (tensor.shape() != params[i].tensor.shape())
            throw DataError(what + ": tensor '" + name + "' has shape " +
                            shape_str(tensor.shape()) + ", expected " +
                            shape_str(params[i].tensor.shape()));
        params[i].tensor.data() = tensor.data();
    }
}

}  // namespace detail

// Rebuild a generator from a checkpoint; the config snapshot supplies the
// architecture.
inline GeneratorModel generator_from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.kind != "generator")
        throw DataError("expected a generator checkpoint, found kind '" + ckpt.kind + "'");
    const RunConfig config = checkpoint_config(ckpt);
    GeneratorModel model = init_generator(config.generator_config(), 0);
    detail::fill_params_from_checkpoint(model, ckpt, "generator checkpoint");
    return model;
}

inline DiscriminatorModel discriminator_from_checkpoint(const Checkpoint& ckpt) {
    if (ckpt.kind != "discriminator")
        throw DataError("expected a discriminator checkpoint, found kind '" + ckpt.kind + "'");
    const RunConfig config = checkpoint_config(ckpt);
    DiscriminatorModel model = init_discriminator(config.discriminator_config(), 0);
    detail::fill_params_from_checkpoint(model, ckpt, "discriminator checkpoint");
    return model;
}

}  // namespace pgcr
