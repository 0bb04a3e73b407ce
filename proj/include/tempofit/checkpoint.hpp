#pragma once

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "tempofit/io.hpp"
#include "tempofit/params.hpp"
#include "tempofit/tensor.hpp"

namespace tempofit {

// CKPT: magic "CKPT1\0", u16 version = 1, u32 tensor count; per tensor
// u16 name length, UTF-8 name, u8 trainable, u8 rank, rank x u32 dims,
// f32 payload; then a u32-length-prefixed UTF-8 configuration blob.
inline constexpr char kCkptMagic[6] = {'C', 'K', 'P', 'T', '1', '\0'};
inline constexpr std::uint16_t kCkptVersion = 1;

template <typename S>
void save_checkpoint(const std::vector<ParamRef<S>>& params, const std::string& config_text,
                     const std::filesystem::path& path) {
    std::set<std::string> seen;
    for (const auto& p : params) {
        if (!seen.insert(p.name).second) {
            throw std::invalid_argument("duplicate tensor name in checkpoint: " + p.name);
        }
        if (p.name.size() > 0xffff) throw std::invalid_argument("tensor name too long");
        if (p.value->rank() > 0xff) throw std::invalid_argument("tensor rank too large");
    }

    AtomicFile file(path);
    auto& out = file.stream();
    out.write(kCkptMagic, 6);
    write_u16(out, kCkptVersion);
    write_u32(out, static_cast<std::uint32_t>(params.size()));
    for (const auto& p : params) {
        write_u16(out, static_cast<std::uint16_t>(p.name.size()));
        out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        write_u8(out, p.trainable ? 1 : 0);
        write_u8(out, static_cast<std::uint8_t>(p.value->rank()));
        for (std::size_t d = 0; d < p.value->rank(); ++d) {
            write_u32(out, static_cast<std::uint32_t>(p.value->dim(d)));
        }
        for (const S& v : p.value->values()) write_f32(out, static_cast<float>(v));
    }
    write_u32(out, static_cast<std::uint32_t>(config_text.size()));
    out.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));
    file.commit();
}

struct CheckpointEntry {
    std::string name;
    bool trainable = true;
    Tensor<float> value;
};

struct LoadedCheckpoint {
    std::vector<CheckpointEntry> entries;
    std::string config_text;

    const CheckpointEntry* find(const std::string& name) const {
        for (const auto& e : entries) {
            if (e.name == name) return &e;
        }
        return nullptr;
    }
};

inline LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
    auto in = open_binary_for_read(path);
    expect_magic(in, kCkptMagic, 6, "CKPT");
    const std::uint16_t version = read_u16(in, "CKPT version");
    if (version != kCkptVersion) {
        throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    const std::uint32_t count = read_u32(in, "CKPT tensor count");

    LoadedCheckpoint ckpt;
    std::set<std::string> seen;
    for (std::uint32_t ti = 0; ti < count; ++ti) {
        CheckpointEntry e;
        const std::uint16_t name_len = read_u16(in, "tensor name length");
        e.name.resize(name_len);
        read_exact(in, e.name.data(), name_len, "tensor name");
        if (!seen.insert(e.name).second) {
            throw FormatError("duplicate tensor name in checkpoint: " + e.name);
        }
        e.trainable = read_u8(in, "trainable flag") != 0;
        const std::uint8_t rank = read_u8(in, "tensor rank");
        Shape shape(rank);
        for (std::uint8_t d = 0; d < rank; ++d) shape[d] = read_u32(in, "tensor dims");
        std::size_t n;
        try {
            n = shape_numel(shape);
        } catch (const std::invalid_argument& err) {
            throw FormatError(std::string("checkpoint tensor shape invalid: ") + err.what());
        }
        if (n > (std::size_t{1} << 31)) throw FormatError("checkpoint tensor unreasonably large");
        e.value = Tensor<float>(shape);
        for (std::size_t i = 0; i < n; ++i) e.value[i] = read_f32(in, "tensor payload");
        ckpt.entries.push_back(std::move(e));
    }
    const std::uint32_t cfg_len = read_u32(in, "config blob length");
    ckpt.config_text.resize(cfg_len);
    read_exact(in, ckpt.config_text.data(), cfg_len, "config blob");
    return ckpt;
}

// Validates every parameter against the checkpoint before copying anything,
// so a mismatch never leaves the model half-loaded.
template <typename S>
void load_into_params(const std::vector<ParamRef<S>>& params, const LoadedCheckpoint& ckpt) {
    if (params.size() != ckpt.entries.size()) {
        throw FormatError("checkpoint tensor count does not match the model");
    }
    for (const auto& p : params) {
        const CheckpointEntry* e = ckpt.find(p.name);
        if (e == nullptr) throw FormatError("checkpoint missing tensor: " + p.name);
        if (e->value.shape() != p.value->shape()) {
            throw FormatError("checkpoint shape mismatch for " + p.name + ": file has " +
                              shape_to_string(e->value.shape()) + ", model wants " +
                              shape_to_string(p.value->shape()));
        }
    }
    for (const auto& p : params) {
        const CheckpointEntry* e = ckpt.find(p.name);
        for (std::size_t i = 0; i < e->value.size(); ++i) {
            (*p.value)[i] = static_cast<S>(e->value[i]);
        }
    }
}

}  // namespace tempofit
