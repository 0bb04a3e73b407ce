#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "tempofit/attention.hpp"
#include "tempofit/extractors.hpp"
#include "tempofit/lstm.hpp"
#include "tempofit/nn.hpp"
#include "tempofit/params.hpp"
#include "tempofit/rng.hpp"
#include "tempofit/tensor.hpp"

namespace tempofit {

inline const char* to_string(PoolMode m) {
    return m == PoolMode::weighted_sum ? "weighted_sum" : "mean_of_attended";
}

inline PoolMode pool_mode_from_string(const std::string& s) {
    if (s == "weighted_sum") return PoolMode::weighted_sum;
    if (s == "mean_of_attended") return PoolMode::mean_of_attended;
    throw std::invalid_argument("unknown pool mode: " + s);
}

struct ModelConfig {
    ExtractorConfig extractor;
    std::size_t frames = 20;
    std::size_t height = 64, width = 64, channels = 3;
    std::size_t classes = 2;
    std::size_t lstm_hidden = 64;
    std::size_t attn_hidden = 32;
    PoolMode pool = PoolMode::weighted_sum;

    void validate() const {
        if (frames == 0 || classes == 0 || lstm_hidden == 0 || attn_hidden == 0) {
            throw std::invalid_argument("model dimensions must be >= 1");
        }
        if (extractor.kind != ExtractorKind::precomputed && (height == 0 || width == 0 || channels == 0)) {
            throw std::invalid_argument("frame geometry must be >= 1");
        }
        extractor.validate(height, width, channels);
    }
};

template <typename S>
struct ForwardCache {
    ExtractorCache<S> extractor;
    Tensor<S> features;  // (T, D)
    LstmSeqOut<S> lstm;
    AttentionOut<S> attn;
    Tensor<S> context;   // (d)
    Tensor<S> probs;     // (C)
};

// Extractor -> TimeDistributed flatten -> LSTM -> temporal attention ->
// pooled context -> dense -> softmax.
template <typename S>
class Model {
public:
    static Model build(const ModelConfig& cfg, std::uint64_t seed) {
        cfg.validate();
        Model m;
        m.cfg_ = cfg;
        Rng rng(mix_seed(seed, 0xA11C0DE));
        m.extractor_ = Extractor<S>::build(cfg.extractor, cfg.height, cfg.width, cfg.channels, rng);

        const std::size_t d_in = m.extractor_.out_dim();
        const std::size_t d = cfg.lstm_hidden;
        m.lstm_ = LstmParams<S>::zeros(d_in, d);
        const std::size_t fan = d_in + d;
        init_uniform_fan_in(m.lstm_.wi, fan, rng);
        init_uniform_fan_in(m.lstm_.wf, fan, rng);
        init_uniform_fan_in(m.lstm_.wg, fan, rng);
        init_uniform_fan_in(m.lstm_.wo, fan, rng);
        m.lstm_.bf.fill(S(1));  // forget gate starts open
        m.lstm_grads_ = LstmParams<S>::zeros(d_in, d);

        m.attn_ = AttentionParams<S>::zeros(d, cfg.attn_hidden);
        init_uniform_fan_in(m.attn_.wh, d, rng);
        init_uniform_fan_in(m.attn_.wa, cfg.attn_hidden, rng);
        m.attn_grads_ = AttentionParams<S>::zeros(d, cfg.attn_hidden);

        m.fc_w_ = Tensor<S>({cfg.classes, d});
        m.fc_b_ = Tensor<S>({cfg.classes});
        init_uniform_fan_in(m.fc_w_, d, rng);
        m.fc_wg_ = Tensor<S>(m.fc_w_.shape());
        m.fc_bg_ = Tensor<S>(m.fc_b_.shape());
        return m;
    }

    const ModelConfig& config() const { return cfg_; }

    // sample: (T,H,W,C) frame sequence, or (T,D) features for precomputed.
    Tensor<S> forward(const Tensor<S>& sample, ForwardCache<S>& cache) const {
        if (sample.dim(0) != cfg_.frames) {
            throw std::invalid_argument("sample timestep count does not match the model");
        }
        cache.features = extractor_.forward(sample, cache.extractor);
        cache.lstm = lstm_sequence(cache.features, lstm_);
        cache.attn = temporal_attention(cache.lstm.h_all, attn_);
        cache.context = attention_pool(cache.lstm.h_all, cache.attn.a, cfg_.pool);
        const Tensor<S> logits = dense(cache.context, fc_w_, fc_b_);
        cache.probs = softmax(logits);
        return cache.probs;
    }

    Tensor<S> forward(const Tensor<S>& sample) const {
        ForwardCache<S> cache;
        return forward(sample, cache);
    }

    struct SampleResult {
        S loss;
        std::size_t predicted;
    };

    // Cross-entropy loss for `label`, accumulating parameter gradients.
    SampleResult loss_and_backward(const Tensor<S>& sample, std::size_t label) {
        if (label >= cfg_.classes) throw std::invalid_argument("label out of range");
        ForwardCache<S> cache;
        forward(sample, cache);
        const S loss = cross_entropy(cache.probs, label);
        if (!std::isfinite(static_cast<double>(loss))) {
            throw std::runtime_error("non-finite loss; aborting");
        }

        const Tensor<S> dlogits = softmax_cross_entropy_backward(cache.probs, label);
        auto dfc = dense_backward(cache.context, fc_w_, dlogits);
        accumulate(fc_wg_, dfc.dw);
        accumulate(fc_bg_, dfc.db);

        auto dpool = attention_pool_backward(cache.lstm.h_all, cache.attn.a, cfg_.pool, dfc.dx);
        auto dattn = temporal_attention_backward(cache.lstm.h_all, attn_, cache.attn, dpool.da);
        accumulate(attn_grads_.wh, dattn.dp.wh);
        accumulate(attn_grads_.bh, dattn.dp.bh);
        accumulate(attn_grads_.wa, dattn.dp.wa);
        accumulate(attn_grads_.ba, dattn.dp.ba);

        // H feeds both the attention scores and the pooled sum
        Tensor<S> dh = dpool.dh;
        for (std::size_t i = 0; i < dh.size(); ++i) dh[i] += dattn.dh[i];

        auto dlstm = lstm_sequence_backward(cache.lstm, lstm_, dh);
        accumulate(lstm_grads_.wi, dlstm.dp.wi);
        accumulate(lstm_grads_.wf, dlstm.dp.wf);
        accumulate(lstm_grads_.wg, dlstm.dp.wg);
        accumulate(lstm_grads_.wo, dlstm.dp.wo);
        accumulate(lstm_grads_.bi, dlstm.dp.bi);
        accumulate(lstm_grads_.bf, dlstm.dp.bf);
        accumulate(lstm_grads_.bg, dlstm.dp.bg);
        accumulate(lstm_grads_.bo, dlstm.dp.bo);

        if (!cfg_.extractor.frozen) {
            extractor_.backward(cache.extractor, dlstm.dxs);
        }
        return SampleResult{loss, argmax(cache.probs)};
    }

    static std::size_t argmax(const Tensor<S>& probs) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < probs.size(); ++i) {
            if (probs[i] > probs[best]) best = i;
        }
        return best;
    }

    std::vector<ParamRef<S>> params() {
        std::vector<ParamRef<S>> out;
        extractor_.collect_params(out);
        register_param(out, "lstm.wi", lstm_.wi, lstm_grads_.wi, true);
        register_param(out, "lstm.wf", lstm_.wf, lstm_grads_.wf, true);
        register_param(out, "lstm.wg", lstm_.wg, lstm_grads_.wg, true);
        register_param(out, "lstm.wo", lstm_.wo, lstm_grads_.wo, true);
        register_param(out, "lstm.bi", lstm_.bi, lstm_grads_.bi, true);
        register_param(out, "lstm.bf", lstm_.bf, lstm_grads_.bf, true);
        register_param(out, "lstm.bg", lstm_.bg, lstm_grads_.bg, true);
        register_param(out, "lstm.bo", lstm_.bo, lstm_grads_.bo, true);
        register_param(out, "attn.wh", attn_.wh, attn_grads_.wh, true);
        register_param(out, "attn.bh", attn_.bh, attn_grads_.bh, true);
        register_param(out, "attn.wa", attn_.wa, attn_grads_.wa, true);
        register_param(out, "attn.ba", attn_.ba, attn_grads_.ba, true);
        register_param(out, "fc.w", fc_w_, fc_wg_, true);
        register_param(out, "fc.b", fc_b_, fc_bg_, true);
        return out;
    }

    void zero_grads() {
        for (auto& p : params()) p.grad->fill(S(0));
    }

    void scale_grads(S factor) {
        for (auto& p : params()) {
            for (std::size_t i = 0; i < p.grad->size(); ++i) (*p.grad)[i] *= factor;
        }
    }

private:
    static void accumulate(Tensor<S>& into, const Tensor<S>& g) {
        for (std::size_t i = 0; i < into.size(); ++i) into[i] += g[i];
    }

    ModelConfig cfg_;
    Extractor<S> extractor_;
    LstmParams<S> lstm_, lstm_grads_;
    AttentionParams<S> attn_, attn_grads_;
    Tensor<S> fc_w_, fc_b_, fc_wg_, fc_bg_;
};

}  // namespace tempofit
