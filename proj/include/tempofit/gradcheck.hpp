#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "tempofit/params.hpp"
#include "tempofit/rng.hpp"
#include "tempofit/tensor.hpp"

namespace tempofit {

struct GradCheckOptions {
    double step = 1e-6;          // central-difference half-step
    std::size_t max_probes = 0;  // 0 = every element; otherwise a seeded subset per tensor
    std::uint64_t seed = 0;
};

struct TensorCheckResult {
    std::string name;
    double max_err = 0.0;
    std::size_t probes = 0;
};

// Relative error with an absolute floor of 1: pure relative for large
// gradients, absolute for small ones, so finite-difference noise on
// near-zero entries cannot dominate the report.
inline double gradient_error(double analytic, double numeric) {
    if (!std::isfinite(analytic) || !std::isfinite(numeric)) {
        return std::numeric_limits<double>::infinity();
    }
    const double denom = std::max({1.0, std::abs(analytic), std::abs(numeric)});
    return std::abs(analytic - numeric) / denom;
}

// Compares the supplied analytic gradients against central finite
// differences of `loss` evaluated at the live parameter values. `analytic`
// is aligned with `params`; the caller snapshots (and may deliberately
// perturb, for fault-injection tests) those gradients beforehand.
template <typename LossFn>
std::vector<TensorCheckResult> grad_check(const std::vector<ParamRef<double>>& params,
                                          const std::vector<Tensor<double>>& analytic, LossFn&& loss,
                                          const GradCheckOptions& opt = {}) {
    if (analytic.size() != params.size()) {
        throw std::invalid_argument("grad_check: analytic gradient count mismatch");
    }
    std::vector<TensorCheckResult> results;
    results.reserve(params.size());
    const double h = opt.step;

    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        const ParamRef<double>& p = params[pi];
        TensorCheckResult res;
        res.name = p.name;

        std::vector<std::size_t> probe_idx(p.value->size());
        std::iota(probe_idx.begin(), probe_idx.end(), std::size_t{0});
        if (opt.max_probes != 0 && opt.max_probes < probe_idx.size()) {
            Rng rng(mix_seed(opt.seed, pi));
            rng.shuffle(probe_idx);
            probe_idx.resize(opt.max_probes);
        }

        for (std::size_t idx : probe_idx) {
            const double saved = (*p.value)[idx];
            (*p.value)[idx] = saved + h;
            const double plus = loss();
            (*p.value)[idx] = saved - h;
            const double minus = loss();
            (*p.value)[idx] = saved;
            const double numeric = (plus - minus) / (2.0 * h);
            res.max_err = std::max(res.max_err, gradient_error(analytic[pi][idx], numeric));
            ++res.probes;
        }
        results.push_back(std::move(res));
    }
    return results;
}

inline double max_gradient_error(const std::vector<TensorCheckResult>& results) {
    double m = 0.0;
    for (const auto& r : results) m = std::max(m, r.max_err);
    return m;
}

// Snapshot of the current gradient buffers, aligned with `params`.
inline std::vector<Tensor<double>> snapshot_grads(const std::vector<ParamRef<double>>& params) {
    std::vector<Tensor<double>> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(*p.grad);
    return out;
}

}  // namespace tempofit
