#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "tempofit/blocks.hpp"
#include "tempofit/io.hpp"
#include "tempofit/nn.hpp"
#include "tempofit/params.hpp"
#include "tempofit/tensor.hpp"
#include "tempofit/vit.hpp"

namespace tempofit {

enum class ExtractorKind { conv_small, vit_toy, resnet_block, effnet_block, precomputed };

inline const char* to_string(ExtractorKind k) {
    switch (k) {
        case ExtractorKind::conv_small: return "conv_small";
        case ExtractorKind::vit_toy: return "vit_toy";
        case ExtractorKind::resnet_block: return "resnet_block";
        case ExtractorKind::effnet_block: return "effnet_block";
        case ExtractorKind::precomputed: return "precomputed";
    }
    return "?";
}

inline ExtractorKind extractor_kind_from_string(const std::string& s) {
    if (s == "conv_small") return ExtractorKind::conv_small;
    if (s == "vit_toy") return ExtractorKind::vit_toy;
    if (s == "resnet_block") return ExtractorKind::resnet_block;
    if (s == "effnet_block") return ExtractorKind::effnet_block;
    if (s == "precomputed") return ExtractorKind::precomputed;
    throw std::invalid_argument("unknown extractor kind: " + s);
}

struct ExtractorConfig {
    ExtractorKind kind = ExtractorKind::conv_small;
    bool frozen = false;

    std::vector<std::size_t> conv_filters = {8};            // conv_small stages
    std::size_t vit_patch = 8, vit_dim = 16, vit_heads = 2;  // vit_toy
    std::size_t vit_depth = 1, vit_ff = 32;
    std::size_t res_mid = 4;                                 // resnet_block bottleneck width
    std::size_t eff_filters = 8, eff_se_reduction = 4;       // effnet_block
    std::size_t feature_dim = 0;                             // precomputed input width

    void validate(std::size_t h, std::size_t w, std::size_t c) const {
        switch (kind) {
            case ExtractorKind::conv_small:
                if (conv_filters.empty()) throw std::invalid_argument("conv_small needs at least one stage");
                for (std::size_t nfe = 0, hh = h, ww = w; nfe < conv_filters.size(); ++nfe) {
                    if (hh < 2 || ww < 2) throw std::invalid_argument("conv_small input too small to pool");
                    hh /= 2;
                    ww /= 2;
                }
                break;
            case ExtractorKind::vit_toy:
                if (vit_patch == 0 || h % vit_patch != 0 || w % vit_patch != 0) {
                    throw std::invalid_argument("image sides must be divisible by the patch size");
                }
                if (vit_depth < 1 || vit_heads < 1 || vit_dim % vit_heads != 0) {
                    throw std::invalid_argument("vit_toy needs depth >= 1, heads >= 1, dim divisible by heads");
                }
                break;
            case ExtractorKind::resnet_block:
                if (res_mid == 0) throw std::invalid_argument("bottleneck width must be >= 1");
                break;
            case ExtractorKind::effnet_block:
                if (eff_filters == 0) throw std::invalid_argument("effnet_block needs filters >= 1");
                if (eff_se_reduction == 0 || eff_filters % eff_se_reduction != 0) {
                    throw std::invalid_argument("SE reduction must divide the channel count");
                }
                (void)c;
                break;
            case ExtractorKind::precomputed:
                if (feature_dim == 0) throw std::invalid_argument("precomputed extractor needs feature_dim");
                break;
        }
    }

    // Feature width D produced per frame.
    std::size_t out_dim(std::size_t h, std::size_t w, std::size_t c) const {
        switch (kind) {
            case ExtractorKind::conv_small: {
                std::size_t hh = h, ww = w;
                for (std::size_t i = 0; i < conv_filters.size(); ++i) {
                    hh /= 2;
                    ww /= 2;
                }
                return hh * ww * conv_filters.back();
            }
            case ExtractorKind::vit_toy:
                return vit_dim;
            case ExtractorKind::resnet_block:
                return h * w * c;
            case ExtractorKind::effnet_block:
                return h * w * eff_filters;
            case ExtractorKind::precomputed:
                return feature_dim;
        }
        return 0;
    }
};

template <typename S>
struct ConvStage {
    Tensor<S> w, b;       // (3,3,Cin,Cout), (Cout)
    Tensor<S> dw_g, db_g;
};

// Per-frame caches for one sequence pass; only the active kind's members fill.
template <typename S>
struct ExtractorCache {
    // conv_small: per frame, per stage
    std::vector<std::vector<Tensor<S>>> conv_in;           // stage inputs
    std::vector<std::vector<Tensor<S>>> conv_pre;          // conv output before relu
    std::vector<std::vector<MaxPool2Out<S>>> conv_pool;    // pool outputs (y used as next input source)
    // vit_toy
    std::vector<Tensor<S>> vit_tokens;                     // patchified frame
    std::vector<Tensor<S>> vit_embedded;                   // E + P
    std::vector<std::vector<VitBlockCache<S>>> vit_blocks;
    // resnet_block / effnet_block
    std::vector<BottleneckCache<S>> res;
    std::vector<SepConvCache<S>> eff_sep;
    std::vector<Tensor<S>> eff_pre_relu;
    std::vector<SqueezeExciteCache<S>> eff_se;
    std::vector<bool> eff_residual;
};

// Per-frame feature extractor with shared parameters across timesteps.
template <typename S>
class Extractor {
public:
    static Extractor build(const ExtractorConfig& cfg, std::size_t h, std::size_t w, std::size_t c,
                           Rng& rng) {
        cfg.validate(h, w, c);
        Extractor e;
        e.cfg_ = cfg;
        e.in_h_ = h;
        e.in_w_ = w;
        e.in_c_ = c;
        switch (cfg.kind) {
            case ExtractorKind::conv_small: {
                std::size_t cin = c;
                for (std::size_t cout : cfg.conv_filters) {
                    ConvStage<S> st;
                    st.w = Tensor<S>({3, 3, cin, cout});
                    st.b = Tensor<S>({cout});
                    init_uniform_fan_in(st.w, 3 * 3 * cin, rng);
                    st.dw_g = Tensor<S>(st.w.shape());
                    st.db_g = Tensor<S>(st.b.shape());
                    e.conv_.push_back(std::move(st));
                    cin = cout;
                }
                break;
            }
            case ExtractorKind::vit_toy: {
                const std::size_t n = (h / cfg.vit_patch) * (w / cfg.vit_patch);
                const std::size_t pdim = cfg.vit_patch * cfg.vit_patch * c;
                e.vit_embed_w_ = Tensor<S>({cfg.vit_dim, pdim});
                e.vit_embed_b_ = Tensor<S>({cfg.vit_dim});
                init_uniform_fan_in(e.vit_embed_w_, pdim, rng);
                e.vit_pos_ = Tensor<S>({n, cfg.vit_dim});  // learned, zero-initialized
                for (std::size_t l = 0; l < cfg.vit_depth; ++l) {
                    VitBlockParams<S> p = VitBlockParams<S>::zeros(cfg.vit_dim, cfg.vit_ff);
                    p.ln1_g.fill(S(1));
                    p.ln2_g.fill(S(1));
                    init_uniform_fan_in(p.attn.wq, cfg.vit_dim, rng);
                    init_uniform_fan_in(p.attn.wk, cfg.vit_dim, rng);
                    init_uniform_fan_in(p.attn.wv, cfg.vit_dim, rng);
                    init_uniform_fan_in(p.attn.wo, cfg.vit_dim, rng);
                    init_uniform_fan_in(p.ff_w1, cfg.vit_dim, rng);
                    init_uniform_fan_in(p.ff_w2, cfg.vit_ff, rng);
                    e.vit_blocks_.push_back(std::move(p));
                    e.vit_block_grads_.push_back(VitBlockParams<S>::zeros(cfg.vit_dim, cfg.vit_ff));
                }
                e.vit_embed_wg_ = Tensor<S>(e.vit_embed_w_.shape());
                e.vit_embed_bg_ = Tensor<S>(e.vit_embed_b_.shape());
                e.vit_pos_g_ = Tensor<S>(e.vit_pos_.shape());
                break;
            }
            case ExtractorKind::resnet_block: {
                e.res_ = BottleneckParams<S>::zeros(c, cfg.res_mid);
                init_uniform_fan_in(e.res_.w1, c, rng);
                init_uniform_fan_in(e.res_.w2, 3 * 3 * cfg.res_mid, rng);
                init_uniform_fan_in(e.res_.w3, cfg.res_mid, rng);
                e.res_g_ = BottleneckParams<S>::zeros(c, cfg.res_mid);
                break;
            }
            case ExtractorKind::effnet_block: {
                e.eff_sep_ = SepConvParams<S>::zeros(3, c, cfg.eff_filters);
                init_uniform_fan_in(e.eff_sep_.dw, 3 * 3, rng);
                init_uniform_fan_in(e.eff_sep_.pw, c, rng);
                e.eff_se_ = SqueezeExciteParams<S>::zeros(cfg.eff_filters, cfg.eff_se_reduction);
                init_uniform_fan_in(e.eff_se_.w1, cfg.eff_filters, rng);
                init_uniform_fan_in(e.eff_se_.w2, cfg.eff_filters / cfg.eff_se_reduction, rng);
                e.eff_sep_g_ = SepConvParams<S>::zeros(3, c, cfg.eff_filters);
                e.eff_se_g_ = SqueezeExciteParams<S>::zeros(cfg.eff_filters, cfg.eff_se_reduction);
                break;
            }
            case ExtractorKind::precomputed:
                break;
        }
        return e;
    }

    const ExtractorConfig& config() const { return cfg_; }
    std::size_t out_dim() const { return cfg_.out_dim(in_h_, in_w_, in_c_); }

    // seq: (T,H,W,C) frames, or (T,D) passthrough for kind == precomputed.
    Tensor<S> forward(const Tensor<S>& seq, ExtractorCache<S>& cache) const {
        if (cfg_.kind == ExtractorKind::precomputed) {
            if (seq.rank() != 2 || seq.dim(1) != cfg_.feature_dim) {
                throw std::invalid_argument("precomputed extractor expects (T, feature_dim) input");
            }
            return seq;
        }
        if (seq.rank() != 4) throw std::invalid_argument("extractor expects a (T,H,W,C) sequence");
        if (seq.dim(1) != in_h_ || seq.dim(2) != in_w_ || seq.dim(3) != in_c_) {
            throw std::invalid_argument("sequence geometry does not match the extractor configuration");
        }
        const std::size_t t_len = seq.dim(0);
        const std::size_t frame_size = in_h_ * in_w_ * in_c_;
        const std::size_t d = out_dim();
        Tensor<S> features({t_len, d});

        for (std::size_t t = 0; t < t_len; ++t) {
            Tensor<S> frame({in_h_, in_w_, in_c_});
            for (std::size_t i = 0; i < frame_size; ++i) frame[i] = seq[t * frame_size + i];
            const Tensor<S> feat = forward_frame(frame, cache);
            if (feat.size() != d) throw std::logic_error("extractor produced unexpected feature width");
            for (std::size_t i = 0; i < d; ++i) features(t, i) = feat[i];
        }
        return features;
    }

    // Accumulates parameter gradients; input gradients below the extractor
    // are not needed (frames are data, not parameters).
    void backward(const ExtractorCache<S>& cache, const Tensor<S>& dfeat) {
        if (cfg_.kind == ExtractorKind::precomputed) return;
        const std::size_t t_len = dfeat.dim(0);
        const std::size_t d = dfeat.dim(1);
        for (std::size_t t = 0; t < t_len; ++t) {
            Tensor<S> g({d});
            for (std::size_t i = 0; i < d; ++i) g[i] = dfeat(t, i);
            backward_frame(t, cache, g);
        }
    }

    void collect_params(std::vector<ParamRef<S>>& out) {
        const bool train = !cfg_.frozen;
        switch (cfg_.kind) {
            case ExtractorKind::conv_small:
                for (std::size_t i = 0; i < conv_.size(); ++i) {
                    const std::string base = "extractor.conv" + std::to_string(i);
                    register_param(out, base + ".w", conv_[i].w, conv_[i].dw_g, train);
                    register_param(out, base + ".b", conv_[i].b, conv_[i].db_g, train);
                }
                break;
            case ExtractorKind::vit_toy: {
                register_param(out, "extractor.embed.w", vit_embed_w_, vit_embed_wg_, train);
                register_param(out, "extractor.embed.b", vit_embed_b_, vit_embed_bg_, train);
                register_param(out, "extractor.pos", vit_pos_, vit_pos_g_, train);
                for (std::size_t l = 0; l < vit_blocks_.size(); ++l) {
                    const std::string base = "extractor.blk" + std::to_string(l);
                    auto& p = vit_blocks_[l];
                    auto& g = vit_block_grads_[l];
                    register_param(out, base + ".ln1.g", p.ln1_g, g.ln1_g, train);
                    register_param(out, base + ".ln1.b", p.ln1_b, g.ln1_b, train);
                    register_param(out, base + ".attn.wq", p.attn.wq, g.attn.wq, train);
                    register_param(out, base + ".attn.bq", p.attn.bq, g.attn.bq, train);
                    register_param(out, base + ".attn.wk", p.attn.wk, g.attn.wk, train);
                    register_param(out, base + ".attn.bk", p.attn.bk, g.attn.bk, train);
                    register_param(out, base + ".attn.wv", p.attn.wv, g.attn.wv, train);
                    register_param(out, base + ".attn.bv", p.attn.bv, g.attn.bv, train);
                    register_param(out, base + ".attn.wo", p.attn.wo, g.attn.wo, train);
                    register_param(out, base + ".attn.bo", p.attn.bo, g.attn.bo, train);
                    register_param(out, base + ".ln2.g", p.ln2_g, g.ln2_g, train);
                    register_param(out, base + ".ln2.b", p.ln2_b, g.ln2_b, train);
                    register_param(out, base + ".ff.w1", p.ff_w1, g.ff_w1, train);
                    register_param(out, base + ".ff.b1", p.ff_b1, g.ff_b1, train);
                    register_param(out, base + ".ff.w2", p.ff_w2, g.ff_w2, train);
                    register_param(out, base + ".ff.b2", p.ff_b2, g.ff_b2, train);
                }
                break;
            }
            case ExtractorKind::resnet_block:
                register_param(out, "extractor.res.w1", res_.w1, res_g_.w1, train);
                register_param(out, "extractor.res.b1", res_.b1, res_g_.b1, train);
                register_param(out, "extractor.res.w2", res_.w2, res_g_.w2, train);
                register_param(out, "extractor.res.b2", res_.b2, res_g_.b2, train);
                register_param(out, "extractor.res.w3", res_.w3, res_g_.w3, train);
                register_param(out, "extractor.res.b3", res_.b3, res_g_.b3, train);
                break;
            case ExtractorKind::effnet_block:
                register_param(out, "extractor.eff.dw", eff_sep_.dw, eff_sep_g_.dw, train);
                register_param(out, "extractor.eff.pw", eff_sep_.pw, eff_sep_g_.pw, train);
                register_param(out, "extractor.eff.pb", eff_sep_.pb, eff_sep_g_.pb, train);
                register_param(out, "extractor.eff.se.w1", eff_se_.w1, eff_se_g_.w1, train);
                register_param(out, "extractor.eff.se.b1", eff_se_.b1, eff_se_g_.b1, train);
                register_param(out, "extractor.eff.se.w2", eff_se_.w2, eff_se_g_.w2, train);
                register_param(out, "extractor.eff.se.b2", eff_se_.b2, eff_se_g_.b2, train);
                break;
            case ExtractorKind::precomputed:
                break;
        }
    }

private:
    Tensor<S> forward_frame(const Tensor<S>& frame, ExtractorCache<S>& cache) const {
        switch (cfg_.kind) {
            case ExtractorKind::conv_small: {
                std::vector<Tensor<S>> ins, pres;
                std::vector<MaxPool2Out<S>> pools;
                Tensor<S> cur = frame;
                for (const auto& st : conv_) {
                    ins.push_back(cur);
                    Tensor<S> pre = conv2d(cur, st.w, st.b, 1, Padding::same);
                    Tensor<S> act = relu(pre);
                    pres.push_back(std::move(pre));
                    MaxPool2Out<S> pool = maxpool2(act);
                    cur = pool.y;
                    pools.push_back(std::move(pool));
                }
                cache.conv_in.push_back(std::move(ins));
                cache.conv_pre.push_back(std::move(pres));
                cache.conv_pool.push_back(std::move(pools));
                return flatten(cur);
            }
            case ExtractorKind::vit_toy: {
                Tensor<S> tokens = patchify(frame, cfg_.vit_patch);
                Tensor<S> embedded = linear_rows(tokens, vit_embed_w_, vit_embed_b_);
                for (std::size_t i = 0; i < embedded.size(); ++i) embedded[i] += vit_pos_[i];
                std::vector<VitBlockCache<S>> blocks;
                Tensor<S> cur = embedded;
                for (const auto& blk : vit_blocks_) {
                    VitBlockOut<S> out = vit_block(cur, blk, cfg_.vit_heads);
                    cur = out.y;
                    blocks.push_back(std::move(out.cache));
                }
                cache.vit_tokens.push_back(std::move(tokens));
                cache.vit_embedded.push_back(std::move(embedded));
                cache.vit_blocks.push_back(std::move(blocks));
                // mean over patch tokens
                const std::size_t n = cur.dim(0), dd = cur.dim(1);
                Tensor<S> feat({dd});
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < dd; ++j) feat[j] += cur(i, j);
                }
                for (std::size_t j = 0; j < dd; ++j) feat[j] /= S(n);
                return feat;
            }
            case ExtractorKind::resnet_block: {
                BottleneckOut<S> out = bottleneck_block(frame, res_);
                cache.res.push_back(std::move(out.cache));
                return flatten(out.y);
            }
            case ExtractorKind::effnet_block: {
                SepConvOut<S> sep = depthwise_separable_conv(frame, eff_sep_);
                Tensor<S> act = relu(sep.y);
                SqueezeExciteOut<S> se = squeeze_excitation(act, eff_se_);
                Tensor<S> y = se.y;
                const bool residual = cfg_.eff_filters == in_c_;
                if (residual) {
                    for (std::size_t i = 0; i < y.size(); ++i) y[i] += frame[i];
                }
                cache.eff_pre_relu.push_back(std::move(sep.y));
                cache.eff_sep.push_back(std::move(sep.cache));
                cache.eff_se.push_back(std::move(se.cache));
                cache.eff_residual.push_back(residual);
                return flatten(y);
            }
            case ExtractorKind::precomputed:
                break;
        }
        throw std::logic_error("unreachable extractor kind");
    }

    void backward_frame(std::size_t t, const ExtractorCache<S>& cache, const Tensor<S>& dfeat) {
        switch (cfg_.kind) {
            case ExtractorKind::conv_small: {
                const auto& pools = cache.conv_pool[t];
                Tensor<S> cur(pools.back().y.shape());
                for (std::size_t i = 0; i < cur.size(); ++i) cur[i] = dfeat[i];
                for (std::size_t s = conv_.size(); s-- > 0;) {
                    const Tensor<S>& pre = cache.conv_pre[t][s];
                    Tensor<S> dact = maxpool2_backward(pools[s], pre.shape(), cur);
                    Tensor<S> dpre = relu_backward(pre, dact);
                    auto g = conv2d_backward(cache.conv_in[t][s], conv_[s].w, dpre, 1, Padding::same);
                    accumulate(conv_[s].dw_g, g.dw);
                    accumulate(conv_[s].db_g, g.db);
                    cur = std::move(g.dx);
                }
                break;
            }
            case ExtractorKind::vit_toy: {
                const auto& blocks = cache.vit_blocks[t];
                const std::size_t n = vit_pos_.dim(0), dd = cfg_.vit_dim;
                Tensor<S> dcur({n, dd});
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t j = 0; j < dd; ++j) dcur(i, j) = dfeat[j] / S(n);
                }
                for (std::size_t l = vit_blocks_.size(); l-- > 0;) {
                    VitBlockGrads<S> g = vit_block_backward(vit_blocks_[l], cfg_.vit_heads, blocks[l], dcur);
                    accumulate_block(vit_block_grads_[l], g.dp);
                    dcur = std::move(g.dx);
                }
                accumulate(vit_pos_g_, dcur);
                auto g = linear_rows_backward(cache.vit_tokens[t], vit_embed_w_, dcur);
                accumulate(vit_embed_wg_, g.dw);
                accumulate(vit_embed_bg_, g.db);
                break;
            }
            case ExtractorKind::resnet_block: {
                Tensor<S> dy(cache.res[t].x.shape());
                for (std::size_t i = 0; i < dy.size(); ++i) dy[i] = dfeat[i];
                BottleneckGrads<S> g = bottleneck_block_backward(res_, cache.res[t], dy);
                accumulate(res_g_.w1, g.dp.w1);
                accumulate(res_g_.b1, g.dp.b1);
                accumulate(res_g_.w2, g.dp.w2);
                accumulate(res_g_.b2, g.dp.b2);
                accumulate(res_g_.w3, g.dp.w3);
                accumulate(res_g_.b3, g.dp.b3);
                break;
            }
            case ExtractorKind::effnet_block: {
                Tensor<S> dy({in_h_, in_w_, cfg_.eff_filters});
                for (std::size_t i = 0; i < dy.size(); ++i) dy[i] = dfeat[i];
                SqueezeExciteGrads<S> se = squeeze_excitation_backward(eff_se_, cache.eff_se[t], dy);
                accumulate(eff_se_g_.w1, se.dp.w1);
                accumulate(eff_se_g_.b1, se.dp.b1);
                accumulate(eff_se_g_.w2, se.dp.w2);
                accumulate(eff_se_g_.b2, se.dp.b2);
                Tensor<S> dpre = relu_backward(cache.eff_pre_relu[t], se.dx);
                SepConvGrads<S> sep = depthwise_separable_conv_backward(eff_sep_, cache.eff_sep[t], dpre);
                accumulate(eff_sep_g_.dw, sep.dp.dw);
                accumulate(eff_sep_g_.pw, sep.dp.pw);
                accumulate(eff_sep_g_.pb, sep.dp.pb);
                break;
            }
            case ExtractorKind::precomputed:
                break;
        }
    }

    static Tensor<S> flatten(const Tensor<S>& t) {
        return Tensor<S>({t.size()}, t.values());
    }

    static void accumulate(Tensor<S>& into, const Tensor<S>& g) {
        for (std::size_t i = 0; i < into.size(); ++i) into[i] += g[i];
    }

    static void accumulate_block(VitBlockParams<S>& into, const VitBlockParams<S>& g) {
        accumulate(into.ln1_g, g.ln1_g);
        accumulate(into.ln1_b, g.ln1_b);
        accumulate(into.ln2_g, g.ln2_g);
        accumulate(into.ln2_b, g.ln2_b);
        accumulate(into.attn.wq, g.attn.wq);
        accumulate(into.attn.bq, g.attn.bq);
        accumulate(into.attn.wk, g.attn.wk);
        accumulate(into.attn.bk, g.attn.bk);
        accumulate(into.attn.wv, g.attn.wv);
        accumulate(into.attn.bv, g.attn.bv);
        accumulate(into.attn.wo, g.attn.wo);
        accumulate(into.attn.bo, g.attn.bo);
        accumulate(into.ff_w1, g.ff_w1);
        accumulate(into.ff_b1, g.ff_b1);
        accumulate(into.ff_w2, g.ff_w2);
        accumulate(into.ff_b2, g.ff_b2);
    }

    ExtractorConfig cfg_;
    std::size_t in_h_ = 0, in_w_ = 0, in_c_ = 0;

    std::vector<ConvStage<S>> conv_;

    Tensor<S> vit_embed_w_, vit_embed_b_, vit_pos_;
    Tensor<S> vit_embed_wg_, vit_embed_bg_, vit_pos_g_;
    std::vector<VitBlockParams<S>> vit_blocks_;
    std::vector<VitBlockParams<S>> vit_block_grads_;

    BottleneckParams<S> res_, res_g_;
    SepConvParams<S> eff_sep_, eff_sep_g_;
    SqueezeExciteParams<S> eff_se_, eff_se_g_;
};

// FEAT: magic "FEAT1\0", u32 T, D, then T*D f32 row-major. The loader stands
// in for a pretrained backbone; values must be finite.
inline constexpr char kFeatMagic[6] = {'F', 'E', 'A', 'T', '1', '\0'};

inline void write_feat(const Tensor<float>& features, const std::filesystem::path& path) {
    if (features.rank() != 2) throw std::invalid_argument("FEAT tensor must be (T, D)");
    if (!all_finite(features)) throw std::invalid_argument("FEAT values must be finite");
    AtomicFile file(path);
    auto& out = file.stream();
    out.write(kFeatMagic, 6);
    write_u32(out, static_cast<std::uint32_t>(features.dim(0)));
    write_u32(out, static_cast<std::uint32_t>(features.dim(1)));
    for (float v : features.values()) write_f32(out, v);
    file.commit();
}

inline Tensor<float> read_feat(const std::filesystem::path& path) {
    auto in = open_binary_for_read(path);
    expect_magic(in, kFeatMagic, 6, "FEAT");
    Shape shape(2);
    shape[0] = read_u32(in, "FEAT header");
    shape[1] = read_u32(in, "FEAT header");
    std::size_t n;
    try {
        n = shape_numel(shape);
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("FEAT header invalid: ") + e.what());
    }
    if (n > (std::size_t{1} << 31)) throw FormatError("FEAT dimensions unreasonably large");
    Tensor<float> features(shape);
    for (std::size_t i = 0; i < n; ++i) {
        const float v = read_f32(in, "FEAT payload");
        if (!std::isfinite(v)) throw FormatError("FEAT payload contains non-finite values");
        features[i] = v;
    }
    return features;
}

}  // namespace tempofit
