#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "tempofit/checkpoint.hpp"
#include "tempofit/config.hpp"
#include "tempofit/data.hpp"
#include "tempofit/gradcheck.hpp"
#include "tempofit/metrics.hpp"
#include "tempofit/model.hpp"
#include "tempofit/synth.hpp"
#include "tempofit/training.hpp"
#include "tempofit/videoio.hpp"

namespace tempofit {

// Worker cap: TEMPOFIT_THREADS, 1 = fully deterministic sequential mode.
inline std::size_t configured_threads() {
    const char* env = std::getenv("TEMPOFIT_THREADS");
    if (env == nullptr) return 1;
    const long v = std::strtol(env, nullptr, 10);
    return v < 1 ? 1 : static_cast<std::size_t>(v);
}

inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    AtomicFile file(path);
    file.stream() << text;
    file.commit();
}

inline std::filesystem::path default_labels_path(const std::filesystem::path& manifest) {
    return manifest.parent_path() / "labels.txt";
}

// ---------------------------------------------------------------------------
// preprocess

struct PreprocessOptions {
    std::string manifest;
    std::string labels;  // empty -> labels.txt next to the manifest
    std::string out_dir;
    std::size_t frames = 20;
    std::size_t side_small = 64;
    std::size_t side_large = 64;
    bool single_stage = false;
};

inline int cmd_preprocess(const PreprocessOptions& opt, std::ostream& out, std::ostream& err) {
    try {
        const std::filesystem::path labels_path =
            opt.labels.empty() ? default_labels_path(opt.manifest) : std::filesystem::path(opt.labels);
        const DatasetManifest manifest = load_manifest(opt.manifest, labels_path);
        std::filesystem::create_directories(opt.out_dir);

        const std::size_t n = manifest.entries.size();
        std::vector<std::string> out_names(n);
        std::vector<std::string> errors(n);

        auto process = [&](std::size_t i) {
            try {
                const auto src = manifest.resolve(i);
                if (!std::filesystem::is_directory(src)) {
                    throw std::runtime_error("not a frame directory: " + src.string());
                }
                const RawFrameStack stack = read_frame_directory(src);
                const Tensor<float> seq = preprocess<float>(stack, opt.frames, opt.side_small,
                                                            opt.side_large, !opt.single_stage);
                std::ostringstream name;
                name << std::setw(6) << std::setfill('0') << i << '_'
                     << src.filename().string() << ".fseq";
                write_fseq(seq, std::filesystem::path(opt.out_dir) / name.str());
                out_names[i] = name.str();
            } catch (const std::exception& e) {
                errors[i] = e.what();
            }
        };

        const std::size_t workers = std::min(configured_threads(), n);
        if (workers <= 1) {
            for (std::size_t i = 0; i < n; ++i) process(i);
        } else {
            std::atomic<std::size_t> next{0};
            std::vector<std::thread> pool;
            for (std::size_t w = 0; w < workers; ++w) {
                pool.emplace_back([&] {
                    for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) process(i);
                });
            }
            for (auto& t : pool) t.join();
        }

        std::ostringstream csv;
        csv << "path,label\n";
        std::size_t ok = 0;
        for (std::size_t i = 0; i < n; ++i) {
            if (errors[i].empty()) {
                csv << out_names[i] << ',' << manifest.entries[i].label << '\n';
                ++ok;
            }
        }
        write_text_atomic(std::filesystem::path(opt.out_dir) / "manifest.csv", csv.str());
        std::ostringstream labels_text;
        for (const auto& name : manifest.class_names) labels_text << name << '\n';
        write_text_atomic(std::filesystem::path(opt.out_dir) / "labels.txt", labels_text.str());

        out << "preprocessed " << ok << "/" << n << " samples into " << opt.out_dir << "\n";
        bool failed = false;
        for (std::size_t i = 0; i < n; ++i) {
            if (!errors[i].empty()) {
                err << "error: sample " << i << " (" << manifest.entries[i].path
                    << "): " << errors[i] << "\n";
                failed = true;
            }
        }
        return failed ? 1 : 0;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

// ---------------------------------------------------------------------------
// train

struct TrainOptions {
    std::string config;
    std::string manifest;
    std::string labels;
    std::string out_checkpoint;
    std::string log_csv;
};

namespace detail {

template <typename S>
int run_train(const RunConfig& cfg, const TrainOptions& opt, std::ostream& out) {
    const std::filesystem::path labels_path =
        opt.labels.empty() ? default_labels_path(opt.manifest) : std::filesystem::path(opt.labels);
    const DatasetManifest manifest = load_manifest(opt.manifest, labels_path);
    if (manifest.num_classes() != cfg.model.classes) {
        throw ConfigError("labels file declares " + std::to_string(manifest.num_classes()) +
                          " classes but config says " + std::to_string(cfg.model.classes));
    }
    const std::vector<LoadedSample<S>> samples = load_samples<S>(manifest);
    const SplitAssignment split = split_dataset(manifest, cfg.train.seed);

    Model<S> model = Model<S>::build(cfg.model, cfg.train.seed);
    const TrainLog log = fit_with_early_stopping(model, samples, split, cfg.train);

    write_text_atomic(opt.log_csv, log.to_csv());
    save_checkpoint(model.params(), cfg.to_text(), opt.out_checkpoint);

    const auto val_idx = split.indices(SplitBucket::val);
    const EpochStats val = evaluate_split(model, samples, val_idx);
    out << "trained " << log.rows.size() << " epochs (" << log.stop_reason << "), best epoch "
        << log.best_epoch << "\n";
    out << std::setprecision(6) << "val_loss " << val.loss << " val_acc " << val.accuracy << "\n";
    return 0;
}

}  // namespace detail

inline int cmd_train(const TrainOptions& opt, std::ostream& out, std::ostream& err) {
    try {
        const RunConfig cfg = RunConfig::parse_file(opt.config);
        if (cfg.precision == Precision::f64) {
            return detail::run_train<double>(cfg, opt, out);
        }
        return detail::run_train<float>(cfg, opt, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

// ---------------------------------------------------------------------------
// eval

struct EvalOptions {
    std::string checkpoint;
    std::string manifest;
    std::string labels;
    std::string split = "test";  // test | all
    std::size_t topk = 0;        // 0 -> config value
    std::string report_csv;
    std::string confusion_csv;
};

namespace detail {

template <typename S>
int run_eval(const RunConfig& cfg, const LoadedCheckpoint& ckpt, const EvalOptions& opt,
             std::ostream& out) {
    const std::filesystem::path labels_path =
        opt.labels.empty() ? default_labels_path(opt.manifest) : std::filesystem::path(opt.labels);
    const DatasetManifest manifest = load_manifest(opt.manifest, labels_path);
    if (manifest.num_classes() != cfg.model.classes) {
        throw ConfigError("manifest class count does not match the checkpoint configuration");
    }

    Model<S> model = Model<S>::build(cfg.model, cfg.train.seed);
    auto params = model.params();
    load_into_params(params, ckpt);

    std::vector<std::size_t> indices;
    if (opt.split == "all") {
        for (std::size_t i = 0; i < manifest.entries.size(); ++i) indices.push_back(i);
    } else if (opt.split == "test") {
        indices = split_dataset(manifest, cfg.train.seed).indices(SplitBucket::test);
    } else {
        throw ConfigError("--split must be `test` or `all`");
    }

    const std::vector<LoadedSample<S>> samples = load_samples<S>(manifest);
    const std::size_t k = opt.topk == 0 ? cfg.topk : opt.topk;
    const auto [report, cm] = evaluate(model, samples, indices, k);

    if (!opt.report_csv.empty()) write_text_atomic(opt.report_csv, report.to_csv(manifest.class_names));
    if (!opt.confusion_csv.empty()) write_text_atomic(opt.confusion_csv, cm.to_csv(manifest.class_names));

    out << std::setprecision(6) << "samples " << report.samples << " accuracy " << report.accuracy
        << " top" << k << " " << report.topk_accuracy << " f1_weighted " << report.prf.f1_weighted
        << "\n";
    return 0;
}

}  // namespace detail

inline int cmd_eval(const EvalOptions& opt, std::ostream& out, std::ostream& err) {
    try {
        const LoadedCheckpoint ckpt = load_checkpoint(opt.checkpoint);
        const RunConfig cfg = RunConfig::parse(ckpt.config_text);
        if (opt.topk != 0 && (opt.topk < 1 || opt.topk > cfg.model.classes)) {
            throw ConfigError("--topk must lie in [1, classes]");
        }
        if (cfg.precision == Precision::f64) {
            return detail::run_eval<double>(cfg, ckpt, opt, out);
        }
        return detail::run_eval<float>(cfg, ckpt, opt, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckOptions {
    std::string config;
    std::uint64_t seed = 0;      // 0 -> config seed
    double tolerance = 1e-4;
    std::size_t probes = 32;     // finite-difference probes per tensor, 0 = all
    std::string corrupt;         // test hook: perturb this tensor's analytic gradient
};

// Always runs at 64-bit regardless of the configured training precision.
inline int cmd_gradcheck(const GradcheckOptions& opt, std::ostream& out, std::ostream& err) {
    try {
        const RunConfig cfg = RunConfig::parse_file(opt.config);
        const std::uint64_t seed = opt.seed == 0 ? cfg.train.seed : opt.seed;

        Model<double> model = Model<double>::build(cfg.model, seed);
        Rng rng(mix_seed(seed, 0x6C4DC));

        Shape in_shape;
        if (cfg.model.extractor.kind == ExtractorKind::precomputed) {
            in_shape = {cfg.model.frames, cfg.model.extractor.feature_dim};
        } else {
            in_shape = {cfg.model.frames, cfg.model.height, cfg.model.width, cfg.model.channels};
        }
        Tensor<double> sample(in_shape);
        for (std::size_t i = 0; i < sample.size(); ++i) sample[i] = rng.uniform();
        const std::size_t label = rng.index(cfg.model.classes);

        model.zero_grads();
        model.loss_and_backward(sample, label);

        auto all_params = model.params();
        std::vector<ParamRef<double>> params;
        for (auto& p : all_params) {
            if (p.trainable) params.push_back(p);
        }
        if (params.empty()) throw ConfigError("model has no trainable parameters to check");

        std::vector<Tensor<double>> analytic = snapshot_grads(params);
        if (!opt.corrupt.empty()) {
            bool found = false;
            for (std::size_t i = 0; i < params.size(); ++i) {
                if (params[i].name == opt.corrupt) {
                    analytic[i][0] += 1.0;
                    found = true;
                }
            }
            if (!found) throw ConfigError("no trainable tensor named " + opt.corrupt);
        }

        GradCheckOptions gopt;
        gopt.max_probes = opt.probes;
        gopt.seed = seed;
        auto loss = [&]() { return cross_entropy(model.forward(sample), label); };
        const auto results = grad_check(params, analytic, loss, gopt);

        bool failed = false;
        out << std::scientific << std::setprecision(3);
        for (const auto& r : results) {
            const bool ok = r.max_err <= opt.tolerance;
            out << (ok ? "PASS " : "FAIL ") << r.name << " max_err=" << r.max_err
                << " probes=" << r.probes << "\n";
            failed = failed || !ok;
        }
        out << (failed ? "gradcheck FAILED" : "gradcheck passed") << " (tolerance "
            << opt.tolerance << ")\n";
        return failed ? 1 : 0;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

// ---------------------------------------------------------------------------
// count-params

struct CountParamsOptions {
    std::string config;
};

inline int cmd_count_params(const CountParamsOptions& opt, std::ostream& out, std::ostream& err) {
    try {
        const RunConfig cfg = RunConfig::parse_file(opt.config);
        Model<float> model = Model<float>::build(cfg.model, cfg.train.seed);
        const ParamCount c = count_params(model.params());
        out << "total " << c.total << "\n";
        out << "trainable " << c.trainable << "\n";
        out << "non_trainable " << c.non_trainable << "\n";
        return 0;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

// ---------------------------------------------------------------------------
// synth (utility: generates the moving-square demo dataset as FSEQ files)

struct SynthOptions {
    std::string out_dir;
    std::size_t per_class = 25;
    std::size_t frames = 20;
    std::size_t side = 16;
    std::size_t square = 5;
    double sigma = 0.05;
    std::uint64_t seed = 7;
};

inline int cmd_synth(const SynthOptions& opt, std::ostream& out, std::ostream& err) {
    try {
        SynthConfig scfg;
        scfg.per_class = opt.per_class;
        scfg.frames = opt.frames;
        scfg.side = opt.side;
        scfg.square = opt.square;
        scfg.noise_sigma = opt.sigma;
        scfg.seed = opt.seed;
        const SynthDataset ds = make_moving_square_dataset(scfg);

        std::filesystem::create_directories(opt.out_dir);
        std::ostringstream csv;
        csv << "path,label\n";
        for (std::size_t i = 0; i < ds.samples.size(); ++i) {
            std::ostringstream name;
            name << std::setw(6) << std::setfill('0') << i << '_' << ds.class_names[ds.labels[i]]
                 << ".fseq";
            write_fseq(ds.samples[i], std::filesystem::path(opt.out_dir) / name.str());
            csv << name.str() << ',' << ds.class_names[ds.labels[i]] << '\n';
        }
        write_text_atomic(std::filesystem::path(opt.out_dir) / "manifest.csv", csv.str());
        std::ostringstream labels_text;
        for (const auto& name : ds.class_names) labels_text << name << '\n';
        write_text_atomic(std::filesystem::path(opt.out_dir) / "labels.txt", labels_text.str());
        out << "wrote " << ds.samples.size() << " synthetic sequences to " << opt.out_dir << "\n";
        return 0;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace tempofit
