#pragma once

#include <cstdint>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tempofit/adam.hpp"
#include "tempofit/data.hpp"
#include "tempofit/model.hpp"
#include "tempofit/rng.hpp"

namespace tempofit {

struct TrainConfig {
    double learning_rate = 1e-4;
    std::size_t batch_size = 32;
    std::size_t max_epochs = 100;
    std::size_t patience = 5;       // epochs without val-loss improvement before stopping
    double min_delta = 1e-4;
    std::uint64_t seed = 42;

    void validate() const {
        if (!(learning_rate > 0)) throw std::invalid_argument("learning_rate must be > 0");
        if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
        if (patience < 1) throw std::invalid_argument("patience must be >= 1");
        if (max_epochs < 1) throw std::invalid_argument("max_epochs must be >= 1");
    }
};

// [begin, end) index ranges covering n samples; the final partial batch is kept.
inline std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n,
                                                                     std::size_t batch_size) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t b = 0; b < n; b += batch_size) {
        out.emplace_back(b, std::min(n, b + batch_size));
    }
    return out;
}

struct EpochStats {
    double loss = 0.0;
    double accuracy = 0.0;
};

// One pass over the training split in seeded-shuffled order. The batch
// gradient is the mean of per-sample gradients; the reported loss is the
// mean over all samples in the epoch.
template <typename S>
EpochStats train_epoch(Model<S>& model, const std::vector<LoadedSample<S>>& samples,
                       const std::vector<std::size_t>& train_indices, const TrainConfig& cfg,
                       AdamState<S>& adam, std::size_t epoch) {
    if (train_indices.empty()) throw std::invalid_argument("training split is empty");
    std::vector<std::size_t> order = train_indices;
    Rng rng(mix_seed(cfg.seed, 0xE60C000ULL + epoch));
    rng.shuffle(order);

    auto params = model.params();
    double loss_sum = 0.0;
    std::size_t correct = 0;

    for (const auto& [begin, end] : batch_ranges(order.size(), cfg.batch_size)) {
        model.zero_grads();
        for (std::size_t i = begin; i < end; ++i) {
            const LoadedSample<S>& s = samples[order[i]];
            const auto res = model.loss_and_backward(s.data, s.label);
            loss_sum += static_cast<double>(res.loss);
            if (res.predicted == s.label) ++correct;
        }
        model.scale_grads(S(1) / S(end - begin));
        adam_step(params, adam, cfg.learning_rate);
    }
    return EpochStats{loss_sum / static_cast<double>(order.size()),
                      static_cast<double>(correct) / static_cast<double>(order.size())};
}

// Forward-only mean loss and accuracy over a split, in index order.
template <typename S>
EpochStats evaluate_split(const Model<S>& model, const std::vector<LoadedSample<S>>& samples,
                          const std::vector<std::size_t>& indices) {
    if (indices.empty()) throw std::invalid_argument("evaluation split is empty");
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t i : indices) {
        const Tensor<S> probs = model.forward(samples[i].data);
        loss_sum += static_cast<double>(cross_entropy(probs, samples[i].label));
        if (Model<S>::argmax(probs) == samples[i].label) ++correct;
    }
    return EpochStats{loss_sum / static_cast<double>(indices.size()),
                      static_cast<double>(correct) / static_cast<double>(indices.size())};
}

// Patience rule: an epoch counts as stale unless val loss beat the best by
// more than min_delta; `patience` consecutive stale epochs stop training.
// The restore snapshot tracks the strict minimum so the returned parameters
// are never worse than any logged epoch.
class EarlyStopTracker {
public:
    EarlyStopTracker(std::size_t patience, double min_delta)
        : patience_(patience), min_delta_(min_delta) {}

    struct Update {
        bool new_best;
        bool stop;
    };

    Update update(double val_loss) {
        Update u{false, false};
        if (val_loss < best_ - min_delta_) {
            stale_ = 0;
        } else {
            ++stale_;
        }
        if (val_loss < best_) {
            best_ = val_loss;
            u.new_best = true;
        }
        u.stop = stale_ >= patience_;
        return u;
    }

    double best() const { return best_; }

private:
    std::size_t patience_;
    double min_delta_;
    std::size_t stale_ = 0;
    double best_ = std::numeric_limits<double>::infinity();
};

struct TrainLogRow {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0, train_acc = 0, val_loss = 0, val_acc = 0;
};

struct TrainLog {
    std::vector<TrainLogRow> rows;
    std::string stop_reason;     // "early_stop" or "max_epochs"
    std::size_t best_epoch = 0;  // 1-based epoch of the restored parameters
    double best_val_loss = 0.0;

    std::string to_csv() const {
        std::ostringstream out;
        out << "epoch,train_loss,train_acc,val_loss,val_acc\n";
        out << std::setprecision(9);
        for (const auto& r : rows) {
            out << r.epoch << ',' << r.train_loss << ',' << r.train_acc << ',' << r.val_loss << ','
                << r.val_acc << '\n';
        }
        return out.str();
    }
};

// Trains up to max_epochs with early stopping on validation loss, then
// restores the parameters of the best epoch.
template <typename S>
TrainLog fit_with_early_stopping(Model<S>& model, const std::vector<LoadedSample<S>>& samples,
                                 const SplitAssignment& split, const TrainConfig& cfg) {
    cfg.validate();
    const auto train_idx = split.indices(SplitBucket::train);
    const auto val_idx = split.indices(SplitBucket::val);
    if (train_idx.empty() || val_idx.empty()) {
        throw std::invalid_argument("train and validation splits must be non-empty");
    }

    auto params = model.params();
    AdamState<S> adam = AdamState<S>::init(params);
    EarlyStopTracker stopper(cfg.patience, cfg.min_delta);

    std::vector<Tensor<S>> best_values;
    TrainLog log;
    log.stop_reason = "max_epochs";

    for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const EpochStats train = train_epoch(model, samples, train_idx, cfg, adam, epoch);
        const EpochStats val = evaluate_split(model, samples, val_idx);
        log.rows.push_back(TrainLogRow{epoch, train.loss, train.accuracy, val.loss, val.accuracy});

        const auto u = stopper.update(val.loss);
        if (u.new_best) {
            best_values.clear();
            for (const auto& p : params) best_values.push_back(*p.value);
            log.best_epoch = epoch;
            log.best_val_loss = val.loss;
        }
        if (u.stop) {
            log.stop_reason = "early_stop";
            break;
        }
    }

    for (std::size_t i = 0; i < params.size(); ++i) *params[i].value = best_values[i];
    return log;
}

}  // namespace tempofit
