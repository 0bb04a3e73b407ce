#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>

namespace tempofit {

// Malformed or truncated file content.
struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// All binary formats are little-endian with explicit byte assembly, so files
// are portable regardless of host endianness.

inline void write_u8(std::ostream& out, std::uint8_t v) {
    out.put(static_cast<char>(v));
}

inline void write_u16(std::ostream& out, std::uint16_t v) {
    char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
    out.write(b, 2);
}

inline void write_u32(std::ostream& out, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    out.write(b, 4);
}

inline void write_f32(std::ostream& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32(out, bits);
}

inline void read_exact(std::istream& in, char* buf, std::size_t n, const char* what) {
    in.read(buf, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in.gcount()) != n) {
        throw FormatError(std::string("truncated file while reading ") + what);
    }
}

inline std::uint8_t read_u8(std::istream& in, const char* what = "byte") {
    char b;
    read_exact(in, &b, 1, what);
    return static_cast<std::uint8_t>(b);
}

inline std::uint16_t read_u16(std::istream& in, const char* what = "u16") {
    char b[2];
    read_exact(in, b, 2, what);
    return static_cast<std::uint16_t>(static_cast<std::uint8_t>(b[0])) |
           static_cast<std::uint16_t>(static_cast<std::uint8_t>(b[1])) << 8;
}

inline std::uint32_t read_u32(std::istream& in, const char* what = "u32") {
    char b[4];
    read_exact(in, b, 4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(b[i])) << (8 * i);
    return v;
}

inline float read_f32(std::istream& in, const char* what = "f32") {
    std::uint32_t bits = read_u32(in, what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

inline void expect_magic(std::istream& in, const char* magic, std::size_t len, const char* format_name) {
    std::string buf(len, '\0');
    in.read(buf.data(), static_cast<std::streamsize>(len));
    if (static_cast<std::size_t>(in.gcount()) != len || std::memcmp(buf.data(), magic, len) != 0) {
        throw FormatError(std::string("bad magic: not a ") + format_name + " file");
    }
}

// Writes to <path>.tmp and renames on commit, so a failed writer never leaves
// a partial file at the destination.
class AtomicFile {
public:
    explicit AtomicFile(const std::filesystem::path& path)
        : final_(path), tmp_(path.string() + ".tmp"), out_(tmp_, std::ios::binary | std::ios::trunc) {
        if (!out_) {
            throw std::runtime_error("cannot open for writing: " + tmp_.string());
        }
    }

    AtomicFile(const AtomicFile&) = delete;
    AtomicFile& operator=(const AtomicFile&) = delete;

    std::ostream& stream() { return out_; }

    void commit() {
        out_.flush();
        if (!out_) {
            throw std::runtime_error("write failed: " + tmp_.string());
        }
        out_.close();
        std::filesystem::rename(tmp_, final_);
        committed_ = true;
    }

    ~AtomicFile() {
        if (!committed_) {
            out_.close();
            std::error_code ec;
            std::filesystem::remove(tmp_, ec);
        }
    }

private:
    std::filesystem::path final_;
    std::filesystem::path tmp_;
    std::ofstream out_;
    bool committed_ = false;
};

inline std::ifstream open_binary_for_read(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open file: " + path.string());
    }
    return in;
}

}  // namespace tempofit
