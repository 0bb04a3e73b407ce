#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "tempofit/rng.hpp"
#include "tempofit/tensor.hpp"

namespace tempofit {

// Synthetic motion dataset: a bright square drifts up/down/left/right (one
// direction per class) over a dark background with Gaussian pixel noise,
// wrapping at the frame edges. Single channel, values clamped to [0,1] so
// sequences are valid FSEQ payloads.
struct SynthConfig {
    std::size_t per_class = 25;
    std::size_t frames = 20;
    std::size_t side = 16;
    std::size_t square = 5;
    double noise_sigma = 0.05;
    std::uint64_t seed = 7;
};

struct SynthDataset {
    std::vector<Tensor<float>> samples;  // each (T, side, side, 1)
    std::vector<std::size_t> labels;
    std::vector<std::string> class_names = {"up", "down", "left", "right"};
};

inline SynthDataset make_moving_square_dataset(const SynthConfig& cfg) {
    const int dy[4] = {-1, 1, 0, 0};
    const int dx[4] = {0, 0, -1, 1};
    const int side = static_cast<int>(cfg.side);

    SynthDataset ds;
    Rng rng(mix_seed(cfg.seed, 0x511717));
    for (std::size_t cls = 0; cls < 4; ++cls) {
        for (std::size_t s = 0; s < cfg.per_class; ++s) {
            const int y0 = static_cast<int>(rng.index(cfg.side));
            const int x0 = static_cast<int>(rng.index(cfg.side));
            Tensor<float> seq({cfg.frames, cfg.side, cfg.side, 1});
            for (std::size_t t = 0; t < cfg.frames; ++t) {
                const int ty = y0 + static_cast<int>(t) * dy[cls];
                const int tx = x0 + static_cast<int>(t) * dx[cls];
                for (std::size_t sy = 0; sy < cfg.square; ++sy) {
                    for (std::size_t sx = 0; sx < cfg.square; ++sx) {
                        const int py = ((ty + static_cast<int>(sy)) % side + side) % side;
                        const int px = ((tx + static_cast<int>(sx)) % side + side) % side;
                        seq(t, static_cast<std::size_t>(py), static_cast<std::size_t>(px),
                            std::size_t{0}) = 1.0f;
                    }
                }
                for (std::size_t py = 0; py < cfg.side; ++py) {
                    for (std::size_t px = 0; px < cfg.side; ++px) {
                        float& v = seq(t, py, px, std::size_t{0});
                        v = std::clamp(v + static_cast<float>(rng.normal(0.0, cfg.noise_sigma)),
                                       0.0f, 1.0f);
                    }
                }
            }
            ds.samples.push_back(std::move(seq));
            ds.labels.push_back(cls);
        }
    }
    return ds;
}

}  // namespace tempofit
