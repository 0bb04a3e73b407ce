#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "tempofit/io.hpp"
#include "tempofit/tensor.hpp"

namespace tempofit {

// Ordered stack of raw 8-bit frames, all sharing one geometry.
struct RawFrameStack {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::vector<std::vector<std::uint8_t>> frames;  // each height*width*channels, row-major (h, w, c)

    std::size_t count() const { return frames.size(); }

    void validate() const {
        if (frames.empty()) {
            throw std::invalid_argument("frame stack must contain at least one frame");
        }
        const std::size_t expect = height * width * channels;
        for (const auto& f : frames) {
            if (f.size() != expect) {
                throw std::invalid_argument("all frames must share the same dimensions");
            }
        }
    }
};

// Uniform sampling plan: which source frames feed the sequence.
struct SamplingPlan {
    std::size_t target = 0;                // k
    std::vector<std::size_t> indices;      // k entries, non-decreasing, in [0, n-1]
};

// t_i = floor(i*n / (k+1)) for i = 1..k, clamped into [0, n-1]. Duplicates
// appear when n < k, which keeps short clips usable.
inline SamplingPlan sample_indices(std::size_t n, std::size_t k) {
    if (n == 0) throw std::invalid_argument("frame count must be >= 1");
    if (k == 0) throw std::invalid_argument("sample count must be >= 1");
    SamplingPlan plan;
    plan.target = k;
    plan.indices.reserve(k);
    for (std::size_t i = 1; i <= k; ++i) {
        std::size_t t = i * n / (k + 1);
        plan.indices.push_back(std::min(t, n - 1));
    }
    return plan;
}

// Bilinear resize, pixel centers at (i + 0.5) * scale - 0.5, edges clamped.
// The result of each lerp is clamped into the local 4-corner range so the
// output never leaves the input's [min, max] and constant images stay exact.
template <typename S>
Tensor<S> resize_bilinear(const Tensor<S>& frame, std::size_t out_h, std::size_t out_w) {
    if (frame.rank() != 3) throw std::invalid_argument("resize_bilinear expects an (H,W,C) tensor");
    if (out_h == 0 || out_w == 0) throw std::invalid_argument("output dimensions must be >= 1");
    const std::size_t in_h = frame.dim(0), in_w = frame.dim(1), ch = frame.dim(2);
    Tensor<S> out({out_h, out_w, ch});
    const double scale_h = static_cast<double>(in_h) / static_cast<double>(out_h);
    const double scale_w = static_cast<double>(in_w) / static_cast<double>(out_w);
    for (std::size_t oy = 0; oy < out_h; ++oy) {
        double sy = (static_cast<double>(oy) + 0.5) * scale_h - 0.5;
        sy = std::clamp(sy, 0.0, static_cast<double>(in_h - 1));
        const std::size_t y0 = static_cast<std::size_t>(sy);
        const std::size_t y1 = std::min(y0 + 1, in_h - 1);
        const S fy = static_cast<S>(sy - static_cast<double>(y0));
        for (std::size_t ox = 0; ox < out_w; ++ox) {
            double sx = (static_cast<double>(ox) + 0.5) * scale_w - 0.5;
            sx = std::clamp(sx, 0.0, static_cast<double>(in_w - 1));
            const std::size_t x0 = static_cast<std::size_t>(sx);
            const std::size_t x1 = std::min(x0 + 1, in_w - 1);
            const S fx = static_cast<S>(sx - static_cast<double>(x0));
            for (std::size_t c = 0; c < ch; ++c) {
                const S v00 = frame(y0, x0, c), v01 = frame(y0, x1, c);
                const S v10 = frame(y1, x0, c), v11 = frame(y1, x1, c);
                const S top = v00 + fx * (v01 - v00);
                const S bot = v10 + fx * (v11 - v10);
                S v = top + fy * (bot - top);
                const S lo = std::min(std::min(v00, v01), std::min(v10, v11));
                const S hi = std::max(std::max(v00, v01), std::max(v10, v11));
                out(oy, ox, c) = std::clamp(v, lo, hi);
            }
        }
    }
    return out;
}

// Pixel intensities [0, 255] -> [0, 1].
template <typename S>
Tensor<S> normalize_frame(const Tensor<S>& frame) {
    Tensor<S> out(frame.shape());
    for (std::size_t i = 0; i < frame.size(); ++i) out[i] = frame[i] / S(255);
    return out;
}

template <typename S>
Tensor<S> frame_to_tensor(const RawFrameStack& stack, std::size_t index) {
    Tensor<S> t({stack.height, stack.width, stack.channels});
    const auto& f = stack.frames.at(index);
    for (std::size_t i = 0; i < f.size(); ++i) t[i] = static_cast<S>(f[i]);
    return t;
}

// Sample k frames, resize to side_small, upscale to side_large (the stated
// storage-then-upscale order; set two_stage = false to resize directly),
// then scale intensities into [0, 1]. Output shape (k, side_large, side_large, C).
template <typename S>
Tensor<S> preprocess(const RawFrameStack& stack, std::size_t k, std::size_t side_small,
                     std::size_t side_large, bool two_stage = true) {
    stack.validate();
    if (side_small == 0 || side_large == 0) {
        throw std::invalid_argument("target sides must be >= 1");
    }
    const SamplingPlan plan = sample_indices(stack.count(), k);
    Tensor<S> out({k, side_large, side_large, stack.channels});
    for (std::size_t t = 0; t < k; ++t) {
        Tensor<S> frame = frame_to_tensor<S>(stack, plan.indices[t]);
        if (two_stage && side_small != side_large) {
            frame = resize_bilinear(frame, side_small, side_small);
        }
        frame = resize_bilinear(frame, side_large, side_large);
        frame = normalize_frame(frame);
        for (std::size_t i = 0; i < frame.size(); ++i) {
            out[t * frame.size() + i] = frame[i];
        }
    }
    return out;
}

// FSEQ: magic "FSEQ1\0", u32 T,H,W,C, then T*H*W*C f32 in (t,h,w,c) order,
// every value in [0, 1].
inline constexpr char kFseqMagic[6] = {'F', 'S', 'E', 'Q', '1', '\0'};

inline void write_fseq(const Tensor<float>& seq, const std::filesystem::path& path) {
    if (seq.rank() != 4) throw std::invalid_argument("FSEQ tensor must be (T,H,W,C)");
    for (float v : seq.values()) {
        if (!(v >= 0.0f && v <= 1.0f)) {
            throw std::invalid_argument("FSEQ values must lie in [0,1]");
        }
    }
    AtomicFile file(path);
    auto& out = file.stream();
    out.write(kFseqMagic, 6);
    for (std::size_t i = 0; i < 4; ++i) write_u32(out, static_cast<std::uint32_t>(seq.dim(i)));
    for (float v : seq.values()) write_f32(out, v);
    file.commit();
}

inline Tensor<float> read_fseq(const std::filesystem::path& path) {
    auto in = open_binary_for_read(path);
    expect_magic(in, kFseqMagic, 6, "FSEQ");
    Shape shape(4);
    for (std::size_t i = 0; i < 4; ++i) shape[i] = read_u32(in, "FSEQ header");
    std::size_t n;
    try {
        n = shape_numel(shape);
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("FSEQ header invalid: ") + e.what());
    }
    if (n > (std::size_t{1} << 31)) {
        throw FormatError("FSEQ dimensions unreasonably large");
    }
    Tensor<float> seq(shape);
    for (std::size_t i = 0; i < n; ++i) {
        float v = read_f32(in, "FSEQ payload");
        if (!(v >= 0.0f && v <= 1.0f)) {
            throw FormatError("FSEQ value outside [0,1]");
        }
        seq[i] = v;
    }
    return seq;
}

// --- frame directory ingestion -------------------------------------------
//
// A sample may be a directory of binary PGM (P5) / PPM (P6) stills;
// lexicographic filename order defines frame order. No video codecs.

namespace detail {

inline int pnm_next_int(std::istream& in) {
    // skips whitespace and '#' comment lines
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = in.get();
    }
    if (c == EOF || !std::isdigit(c)) throw FormatError("malformed PNM header");
    int v = 0;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        c = in.get();
    }
    return v;
}

}  // namespace detail

inline void read_pnm_frame(const std::filesystem::path& path, RawFrameStack& stack) {
    auto in = open_binary_for_read(path);
    char p = static_cast<char>(in.get());
    char kind = static_cast<char>(in.get());
    if (p != 'P' || (kind != '5' && kind != '6')) {
        throw FormatError("unsupported image format (want binary PGM/PPM): " + path.string());
    }
    const std::size_t channels = (kind == '6') ? 3 : 1;
    const std::size_t w = static_cast<std::size_t>(detail::pnm_next_int(in));
    const std::size_t h = static_cast<std::size_t>(detail::pnm_next_int(in));
    const int maxval = detail::pnm_next_int(in);
    if (w == 0 || h == 0 || maxval <= 0 || maxval > 255) {
        throw FormatError("unsupported PNM geometry or depth: " + path.string());
    }
    std::vector<std::uint8_t> pixels(h * w * channels);
    read_exact(in, reinterpret_cast<char*>(pixels.data()), pixels.size(), "PNM payload");

    if (stack.frames.empty()) {
        stack.height = h;
        stack.width = w;
        stack.channels = channels;
    } else if (stack.height != h || stack.width != w || stack.channels != channels) {
        throw FormatError("frame geometry differs within directory: " + path.string());
    }
    stack.frames.push_back(std::move(pixels));
}

inline RawFrameStack read_frame_directory(const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        throw std::runtime_error("frame directory is empty: " + dir.string());
    }
    RawFrameStack stack;
    for (const auto& f : files) read_pnm_frame(f, stack);
    stack.validate();
    return stack;
}

}  // namespace tempofit
