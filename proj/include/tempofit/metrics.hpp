#pragma once

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "tempofit/data.hpp"
#include "tempofit/model.hpp"
#include "tempofit/params.hpp"
#include "tempofit/tensor.hpp"

namespace tempofit {

// Rows are true classes, columns predicted.
struct ConfusionMatrix {
    std::size_t classes = 0;
    std::vector<std::size_t> counts;

    explicit ConfusionMatrix(std::size_t c) : classes(c), counts(c * c, 0) {}

    void add(std::size_t true_class, std::size_t predicted) {
        if (true_class >= classes || predicted >= classes) {
            throw std::invalid_argument("confusion matrix class out of range");
        }
        ++counts[true_class * classes + predicted];
    }

    std::size_t at(std::size_t t, std::size_t p) const { return counts[t * classes + p]; }

    std::size_t total() const {
        std::size_t n = 0;
        for (std::size_t c : counts) n += c;
        return n;
    }

    std::size_t diagonal() const {
        std::size_t n = 0;
        for (std::size_t c = 0; c < classes; ++c) n += at(c, c);
        return n;
    }

    std::size_t support(std::size_t t) const {
        std::size_t n = 0;
        for (std::size_t p = 0; p < classes; ++p) n += at(t, p);
        return n;
    }

    std::size_t predicted_count(std::size_t p) const {
        std::size_t n = 0;
        for (std::size_t t = 0; t < classes; ++t) n += at(t, p);
        return n;
    }

    std::string to_csv(const std::vector<std::string>& class_names) const {
        std::ostringstream out;
        for (std::size_t c = 0; c < classes; ++c) {
            if (c) out << ',';
            out << class_names.at(c);
        }
        out << '\n';
        for (std::size_t t = 0; t < classes; ++t) {
            for (std::size_t p = 0; p < classes; ++p) {
                if (p) out << ',';
                out << at(t, p);
            }
            out << '\n';
        }
        return out.str();
    }
};

inline double accuracy(const std::vector<std::size_t>& preds, const std::vector<std::size_t>& labels) {
    if (preds.size() != labels.size()) throw std::invalid_argument("accuracy length mismatch");
    if (preds.empty()) throw std::invalid_argument("accuracy needs at least one sample");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (preds[i] == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(preds.size());
}

// Rank of `label` when classes sort by probability descending, ties broken
// by ascending class index.
inline std::size_t class_rank(const std::vector<double>& probs, std::size_t label) {
    std::size_t rank = 0;
    for (std::size_t j = 0; j < probs.size(); ++j) {
        if (probs[j] > probs[label] || (probs[j] == probs[label] && j < label)) ++rank;
    }
    return rank;
}

inline double topk_accuracy(const std::vector<std::vector<double>>& prob_rows,
                            const std::vector<std::size_t>& labels, std::size_t k) {
    if (prob_rows.size() != labels.size()) throw std::invalid_argument("topk length mismatch");
    if (prob_rows.empty()) throw std::invalid_argument("topk needs at least one sample");
    if (k < 1 || k > prob_rows.front().size()) {
        throw std::invalid_argument("k must lie in [1, class count]");
    }
    std::size_t hit = 0;
    for (std::size_t i = 0; i < prob_rows.size(); ++i) {
        if (class_rank(prob_rows[i], labels[i]) < k) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(prob_rows.size());
}

struct ClassMetrics {
    double precision = 0, recall = 0, f1 = 0;
    std::size_t support = 0;
};

struct PrfReport {
    std::vector<ClassMetrics> per_class;
    double precision_weighted = 0, recall_weighted = 0, f1_weighted = 0;
    double precision_macro = 0, recall_macro = 0, f1_macro = 0;
};

// Per-class precision/recall/F1 from a confusion matrix. Classes with a zero
// denominator score 0. Weighted averages weight by true-class support; the
// weighted recall is computed as sum(TP)/total, the same division as
// accuracy, so the two are bit-identical.
inline PrfReport precision_recall_f1(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw std::invalid_argument("confusion matrix is empty");
    PrfReport r;
    r.per_class.resize(cm.classes);
    const double total = static_cast<double>(cm.total());
    double wp = 0, wf = 0;
    for (std::size_t c = 0; c < cm.classes; ++c) {
        const std::size_t tp = cm.at(c, c);
        const std::size_t pred = cm.predicted_count(c);
        const std::size_t sup = cm.support(c);
        ClassMetrics& cmx = r.per_class[c];
        cmx.support = sup;
        cmx.precision = pred == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(pred);
        cmx.recall = sup == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(sup);
        cmx.f1 = (cmx.precision + cmx.recall) == 0.0
                     ? 0.0
                     : 2.0 * cmx.precision * cmx.recall / (cmx.precision + cmx.recall);
        wp += static_cast<double>(sup) * cmx.precision;
        wf += static_cast<double>(sup) * cmx.f1;
        r.precision_macro += cmx.precision;
        r.recall_macro += cmx.recall;
        r.f1_macro += cmx.f1;
    }
    r.precision_weighted = wp / total;
    r.recall_weighted = static_cast<double>(cm.diagonal()) / total;
    r.f1_weighted = wf / total;
    r.precision_macro /= static_cast<double>(cm.classes);
    r.recall_macro /= static_cast<double>(cm.classes);
    r.f1_macro /= static_cast<double>(cm.classes);
    return r;
}

struct ParamCount {
    std::size_t total = 0, trainable = 0, non_trainable = 0;
};

template <typename S>
ParamCount count_params(const std::vector<ParamRef<S>>& params) {
    ParamCount c;
    for (const auto& p : params) {
        c.total += p.value->size();
        (p.trainable ? c.trainable : c.non_trainable) += p.value->size();
    }
    return c;
}

struct MetricsReport {
    double accuracy = 0;
    double topk_accuracy = 0;
    std::size_t k = 5;
    PrfReport prf;
    std::size_t samples = 0;

    std::string to_csv(const std::vector<std::string>& class_names) const {
        std::ostringstream out;
        out.precision(9);
        out << "metric,value\n";
        out << "samples," << samples << '\n';
        out << "accuracy," << accuracy << '\n';
        out << "top" << k << "_accuracy," << topk_accuracy << '\n';
        out << "precision_weighted," << prf.precision_weighted << '\n';
        out << "recall_weighted," << prf.recall_weighted << '\n';
        out << "f1_weighted," << prf.f1_weighted << '\n';
        out << "precision_macro," << prf.precision_macro << '\n';
        out << "recall_macro," << prf.recall_macro << '\n';
        out << "f1_macro," << prf.f1_macro << '\n';
        for (std::size_t c = 0; c < prf.per_class.size(); ++c) {
            const auto& m = prf.per_class[c];
            const std::string& name = class_names.at(c);
            out << "precision_" << name << ',' << m.precision << '\n';
            out << "recall_" << name << ',' << m.recall << '\n';
            out << "f1_" << name << ',' << m.f1 << '\n';
        }
        return out.str();
    }
};

// Assembles every metric from per-sample probability rows, deterministic in
// index order.
inline std::pair<MetricsReport, ConfusionMatrix> metrics_from_probs(
    const std::vector<std::vector<double>>& prob_rows, const std::vector<std::size_t>& labels,
    std::size_t classes, std::size_t k) {
    if (prob_rows.empty()) throw std::invalid_argument("evaluation needs at least one sample");
    ConfusionMatrix cm(classes);
    std::vector<std::size_t> preds(prob_rows.size());
    for (std::size_t i = 0; i < prob_rows.size(); ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < classes; ++j) {
            if (prob_rows[i][j] > prob_rows[i][best]) best = j;
        }
        preds[i] = best;
        cm.add(labels[i], best);
    }
    MetricsReport rep;
    rep.samples = prob_rows.size();
    rep.accuracy = accuracy(preds, labels);
    rep.k = k;
    rep.topk_accuracy = topk_accuracy(prob_rows, labels, k);
    rep.prf = precision_recall_f1(cm);
    return {rep, cm};
}

// Runs the model over the given sample indices and assembles the report.
template <typename S>
std::pair<MetricsReport, ConfusionMatrix> evaluate(const Model<S>& model,
                                                   const std::vector<LoadedSample<S>>& samples,
                                                   const std::vector<std::size_t>& indices,
                                                   std::size_t k) {
    if (indices.empty()) throw std::invalid_argument("evaluation split is empty");
    std::vector<std::vector<double>> prob_rows;
    std::vector<std::size_t> labels;
    prob_rows.reserve(indices.size());
    labels.reserve(indices.size());
    for (std::size_t i : indices) {
        const Tensor<S> probs = model.forward(samples[i].data);
        std::vector<double> row(probs.size());
        for (std::size_t j = 0; j < probs.size(); ++j) row[j] = static_cast<double>(probs[j]);
        prob_rows.push_back(std::move(row));
        labels.push_back(samples[i].label);
    }
    return metrics_from_probs(prob_rows, labels, model.config().classes, k);
}

}  // namespace tempofit
