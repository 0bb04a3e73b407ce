#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "tempofit/adam.hpp"
#include "tempofit/checkpoint.hpp"
#include "tempofit/config.hpp"
#include "tempofit/data.hpp"
#include "tempofit/synth.hpp"
#include "tempofit/training.hpp"

using namespace tempofit;

namespace {

std::filesystem::path temp_dir() {
    auto dir = std::filesystem::temp_directory_path() / "tempofit_training_test";
    std::filesystem::create_directories(dir);
    return dir;
}

// in-memory manifest with n samples per class
DatasetManifest fake_manifest(const std::vector<std::size_t>& per_class) {
    DatasetManifest m;
    for (std::size_t c = 0; c < per_class.size(); ++c) {
        m.class_names.push_back("class" + std::to_string(c));
    }
    for (std::size_t c = 0; c < per_class.size(); ++c) {
        for (std::size_t i = 0; i < per_class[c]; ++i) {
            ManifestEntry e;
            e.path = "sample_" + std::to_string(c) + "_" + std::to_string(i) + ".fseq";
            e.label = m.class_names[c];
            e.class_id = c;
            m.entries.push_back(e);
        }
    }
    return m;
}

ModelConfig tiny_model_config() {
    ModelConfig cfg;
    cfg.extractor.kind = ExtractorKind::precomputed;
    cfg.extractor.feature_dim = 4;
    cfg.frames = 3;
    cfg.classes = 2;
    cfg.lstm_hidden = 5;
    cfg.attn_hidden = 3;
    return cfg;
}

// two linearly separable feature patterns plus noise
template <typename S>
std::vector<LoadedSample<S>> separable_samples(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<LoadedSample<S>> out;
    for (std::size_t i = 0; i < n; ++i) {
        LoadedSample<S> s;
        s.label = i % 2;
        s.data = Tensor<S>({3, 4});
        for (std::size_t t = 0; t < 3; ++t) {
            for (std::size_t j = 0; j < 4; ++j) {
                const double base = (s.label == 0) == (j < 2) ? 0.9 : 0.1;
                s.data(t, j) = static_cast<S>(base + 0.05 * rng.uniform(-1.0, 1.0));
            }
        }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

TEST(SplitDataset, CountsPerClass) {
    const auto m = fake_manifest({10, 5});
    const auto split = split_dataset(m, 1);
    std::size_t counts[2][3] = {};
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        counts[m.entries[i].class_id][static_cast<std::size_t>(split.bucket[i])]++;
    }
    // n=10: test 2, val 1, train 7
    EXPECT_EQ(counts[0][static_cast<std::size_t>(SplitBucket::test)], 2u);
    EXPECT_EQ(counts[0][static_cast<std::size_t>(SplitBucket::val)], 1u);
    EXPECT_EQ(counts[0][static_cast<std::size_t>(SplitBucket::train)], 7u);
    // n=5: test 1, val 1, train 3
    EXPECT_EQ(counts[1][static_cast<std::size_t>(SplitBucket::test)], 1u);
    EXPECT_EQ(counts[1][static_cast<std::size_t>(SplitBucket::val)], 1u);
    EXPECT_EQ(counts[1][static_cast<std::size_t>(SplitBucket::train)], 3u);
}

TEST(SplitDataset, DeterministicPerSeed) {
    const auto m = fake_manifest({8, 8, 8});
    const auto a = split_dataset(m, 123);
    const auto b = split_dataset(m, 123);
    EXPECT_EQ(a.bucket, b.bucket);

    const auto c = split_dataset(m, 124);
    EXPECT_NE(a.bucket, c.bucket);  // different shuffle
    // but identical per-class counts
    for (std::size_t cls = 0; cls < 3; ++cls) {
        for (auto bucket : {SplitBucket::test, SplitBucket::val, SplitBucket::train}) {
            std::size_t na = 0, nc = 0;
            for (std::size_t i = 0; i < m.entries.size(); ++i) {
                if (m.entries[i].class_id != cls) continue;
                na += a.bucket[i] == bucket;
                nc += c.bucket[i] == bucket;
            }
            EXPECT_EQ(na, nc);
        }
    }
}

TEST(SplitDataset, PartitionsExactly) {
    const auto m = fake_manifest({7, 12, 4, 25});
    const auto split = split_dataset(m, 5);
    ASSERT_EQ(split.bucket.size(), m.entries.size());
    const auto train = split.indices(SplitBucket::train);
    const auto val = split.indices(SplitBucket::val);
    const auto test = split.indices(SplitBucket::test);
    EXPECT_EQ(train.size() + val.size() + test.size(), m.entries.size());
}

TEST(SplitDataset, RejectsTinyClasses) {
    const auto m = fake_manifest({5, 2});
    EXPECT_THROW(split_dataset(m, 1), std::invalid_argument);
}

TEST(Adam, ZeroGradientIsIdentity) {
    Tensor<float> w({3}, {1.0f, -2.0f, 0.5f});
    Tensor<float> g({3});
    std::vector<ParamRef<float>> params;
    register_param<float>(params, "w", w, g, true);
    auto state = AdamState<float>::init(params);
    const auto before = w.values();
    for (int i = 0; i < 5; ++i) adam_step(params, state, 0.01);
    EXPECT_EQ(w.values(), before);  // m stays 0, update stays 0, for any t
}

TEST(Adam, SingleStepOracle) {
    Tensor<double> w({1}, {1.0});
    Tensor<double> g({1}, {1.0});
    std::vector<ParamRef<double>> params;
    register_param<double>(params, "w", w, g, true);
    auto state = AdamState<double>::init(params);
    adam_step(params, state, 0.001);
    // hand-evaluated: mhat = vhat = 1 exactly after one unit-gradient step
    const double expect = 1.0 - 0.001 / (1.0 + 1e-8);
    EXPECT_NEAR(w[0], expect, 1e-15);
    EXPECT_NEAR(w[0], 0.999, 1e-8);
}

TEST(Adam, IndependentParameters) {
    Tensor<double> a({1}, {1.0}), b({1}, {1.0});
    Tensor<double> ga({1}, {1.0}), gb({1}, {0.0});
    std::vector<ParamRef<double>> params;
    register_param<double>(params, "a", a, ga, true);
    register_param<double>(params, "b", b, gb, true);
    auto state = AdamState<double>::init(params);
    adam_step(params, state, 0.001);
    EXPECT_LT(a[0], 1.0);
    EXPECT_DOUBLE_EQ(b[0], 1.0);
}

TEST(Adam, SkipsNonTrainable) {
    Tensor<double> w({2}, {1.0, 1.0});
    Tensor<double> g({2}, {1.0, 1.0});
    std::vector<ParamRef<double>> params;
    register_param<double>(params, "w", w, g, false);
    auto state = AdamState<double>::init(params);
    adam_step(params, state, 0.1);
    EXPECT_DOUBLE_EQ(w[0], 1.0);
}

TEST(BatchRanges, PartitionArithmetic) {
    const auto r = batch_ranges(70, 32);
    ASSERT_EQ(r.size(), 3u);
    EXPECT_EQ(r[0], (std::pair<std::size_t, std::size_t>{0, 32}));
    EXPECT_EQ(r[1], (std::pair<std::size_t, std::size_t>{32, 64}));
    EXPECT_EQ(r[2], (std::pair<std::size_t, std::size_t>{64, 70}));

    EXPECT_EQ(batch_ranges(32, 32).size(), 1u);
    EXPECT_EQ(batch_ranges(1, 32).size(), 1u);
}

TEST(TrainEpoch, IdenticalSamplesBatchLossEqualsSingle) {
    auto cfg = tiny_model_config();
    auto model = Model<double>::build(cfg, 3);

    std::vector<LoadedSample<double>> samples;
    LoadedSample<double> proto;
    proto.label = 1;
    proto.data = Tensor<double>::full({3, 4}, 0.4);
    for (int i = 0; i < 6; ++i) samples.push_back(proto);

    const Tensor<double> probs = model.forward(proto.data);
    const double single = cross_entropy(probs, proto.label);

    TrainConfig tc;
    tc.batch_size = 6;
    tc.seed = 9;
    auto params = model.params();
    auto adam = AdamState<double>::init(params);
    const auto stats = train_epoch(model, samples, {0, 1, 2, 3, 4, 5}, tc, adam, 1);
    EXPECT_NEAR(stats.loss, single, 1e-12);
}

TEST(TrainEpoch, LossDecreasesOnSeparableData) {
    auto cfg = tiny_model_config();
    auto model = Model<double>::build(cfg, 4);
    const auto samples = separable_samples<double>(24, 11);
    std::vector<std::size_t> idx(24);
    for (std::size_t i = 0; i < 24; ++i) idx[i] = i;

    TrainConfig tc;
    tc.batch_size = 8;
    tc.learning_rate = 0.05;  // big steps so one epoch shows progress
    tc.seed = 12;
    auto params = model.params();
    auto adam = AdamState<double>::init(params);

    const EpochStats before = evaluate_split(model, samples, idx);
    double last = before.loss;
    for (std::size_t e = 1; e <= 3; ++e) {
        train_epoch(model, samples, idx, tc, adam, e);
        const EpochStats now = evaluate_split(model, samples, idx);
        EXPECT_LT(now.loss, last);
        last = now.loss;
    }
}

TEST(TrainEpoch, NonFiniteLossAborts) {
    auto cfg = tiny_model_config();
    auto model = Model<double>::build(cfg, 3);
    std::vector<LoadedSample<double>> samples(1);
    samples[0].label = 0;
    samples[0].data = Tensor<double>::full({3, 4}, std::numeric_limits<double>::quiet_NaN());
    TrainConfig tc;
    auto params = model.params();
    auto adam = AdamState<double>::init(params);
    EXPECT_THROW(train_epoch(model, samples, {0}, tc, adam, 1), std::runtime_error);
}

TEST(EarlyStop, RuleTrace) {
    EarlyStopTracker t(2, 1e-4);
    const double losses[4] = {1.0, 0.9, 0.95, 0.97};
    bool stopped = false;
    std::size_t best_epoch = 0;
    for (std::size_t e = 1; e <= 4; ++e) {
        const auto u = t.update(losses[e - 1]);
        if (u.new_best) best_epoch = e;
        if (u.stop) {
            stopped = true;
            EXPECT_EQ(e, 4u);  // stops after the fourth epoch
            break;
        }
    }
    EXPECT_TRUE(stopped);
    EXPECT_EQ(best_epoch, 2u);
    EXPECT_DOUBLE_EQ(t.best(), 0.9);
}

TEST(EarlyStop, MonotoneImprovementNeverStops) {
    EarlyStopTracker t(2, 1e-4);
    double loss = 1.0;
    for (int e = 0; e < 50; ++e) {
        loss *= 0.9;
        EXPECT_FALSE(t.update(loss).stop);
    }
}

TEST(Fit, RestoredParamsReproduceBestValLoss) {
    auto cfg = tiny_model_config();
    auto model = Model<double>::build(cfg, 5);
    const auto samples = separable_samples<double>(20, 21);
    const auto manifest = fake_manifest({10, 10});
    const auto split = split_dataset(manifest, 77);

    TrainConfig tc;
    tc.batch_size = 4;
    tc.learning_rate = 0.02;
    tc.max_epochs = 12;
    tc.patience = 4;
    tc.seed = 77;
    const TrainLog log = fit_with_early_stopping(model, samples, split, tc);
    ASSERT_FALSE(log.rows.empty());
    ASSERT_GT(log.best_epoch, 0u);

    const auto val = evaluate_split(model, samples, split.indices(SplitBucket::val));
    EXPECT_NEAR(val.loss, log.best_val_loss, 1e-12);
    // never worse than any logged epoch
    for (const auto& row : log.rows) {
        EXPECT_LE(log.best_val_loss, row.val_loss + 1e-15);
    }
}

TEST(Fit, DeterministicLogsAndCheckpoints) {
    const auto manifest = fake_manifest({10, 10});
    const auto split = split_dataset(manifest, 31);
    TrainConfig tc;
    tc.batch_size = 4;
    tc.learning_rate = 0.01;
    tc.max_epochs = 5;
    tc.seed = 31;

    auto run = [&](const std::filesystem::path& ckpt_path) {
        auto cfg = tiny_model_config();
        auto model = Model<float>::build(cfg, tc.seed);
        const auto samples = separable_samples<float>(20, 21);
        const TrainLog log = fit_with_early_stopping(model, samples, split, tc);
        save_checkpoint(model.params(), "config-blob", ckpt_path);
        return log.to_csv();
    };

    const auto p1 = temp_dir() / "det1.ckpt";
    const auto p2 = temp_dir() / "det2.ckpt";
    const std::string log1 = run(p1);
    const std::string log2 = run(p2);
    EXPECT_EQ(log1, log2);

    std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
    const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    EXPECT_EQ(b1, b2);
}

TEST(Checkpoint, RoundTripBitExact) {
    auto cfg = tiny_model_config();
    auto model = Model<float>::build(cfg, 17);
    auto params = model.params();
    const auto path = temp_dir() / "roundtrip.ckpt";
    save_checkpoint(params, "some = config\n", path);

    const auto loaded = load_checkpoint(path);
    EXPECT_EQ(loaded.config_text, "some = config\n");
    ASSERT_EQ(loaded.entries.size(), params.size());

    auto model2 = Model<float>::build(cfg, 18);  // different init
    auto params2 = model2.params();
    load_into_params(params2, loaded);
    for (std::size_t i = 0; i < params.size(); ++i) {
        EXPECT_EQ(params[i].value->values(), params2[i].value->values()) << params[i].name;
        EXPECT_EQ(params[i].trainable, loaded.entries[i].trainable);
    }
}

TEST(Checkpoint, CorruptedLengthFieldIsStructuredError) {
    auto cfg = tiny_model_config();
    auto model = Model<float>::build(cfg, 17);
    const auto path = temp_dir() / "corrupt.ckpt";
    save_checkpoint(model.params(), "", path);

    // overwrite the tensor-count field with a huge value
    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(8);
    const char big[4] = {'\xff', '\xff', '\xff', '\x0f'};
    f.write(big, 4);
    f.close();
    EXPECT_THROW(load_checkpoint(path), FormatError);
}

TEST(Checkpoint, MismatchedModelRejectsWithoutPartialLoad) {
    auto cfg = tiny_model_config();
    auto model = Model<float>::build(cfg, 17);
    const auto path = temp_dir() / "mismatch.ckpt";
    save_checkpoint(model.params(), "", path);
    const auto loaded = load_checkpoint(path);

    auto cfg2 = cfg;
    cfg2.lstm_hidden = 7;  // different shapes
    auto other = Model<float>::build(cfg2, 17);
    auto params = other.params();
    std::vector<Tensor<float>> before;
    for (const auto& p : params) before.push_back(*p.value);
    EXPECT_THROW(load_into_params(params, loaded), FormatError);
    for (std::size_t i = 0; i < params.size(); ++i) {
        EXPECT_EQ(params[i].value->values(), before[i].values());
    }
}

TEST(Checkpoint, TruncationDetected) {
    auto cfg = tiny_model_config();
    auto model = Model<float>::build(cfg, 17);
    const auto path = temp_dir() / "trunc.ckpt";
    save_checkpoint(model.params(), "xyz", path);
    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 2);
    EXPECT_THROW(load_checkpoint(path), FormatError);
}

TEST(Fit, FrozenExtractorBitIdenticalAfterFit) {
    ModelConfig cfg;
    cfg.extractor.kind = ExtractorKind::conv_small;
    cfg.extractor.conv_filters = {2};
    cfg.extractor.frozen = true;
    cfg.frames = 2;
    cfg.height = cfg.width = 4;
    cfg.channels = 1;
    cfg.classes = 2;
    cfg.lstm_hidden = 3;
    cfg.attn_hidden = 2;
    auto model = Model<float>::build(cfg, 55);

    Rng rng(56);
    std::vector<LoadedSample<float>> samples;
    for (int i = 0; i < 12; ++i) {
        LoadedSample<float> s;
        s.label = i % 2;
        s.data = Tensor<float>({2, 4, 4, 1});
        for (std::size_t j = 0; j < s.data.size(); ++j) {
            s.data[j] = static_cast<float>(rng.uniform()) * (s.label ? 1.0f : 0.3f);
        }
        samples.push_back(std::move(s));
    }
    const auto manifest = fake_manifest({6, 6});
    const auto split = split_dataset(manifest, 55);

    auto params = model.params();
    std::vector<Tensor<float>> frozen_before;
    for (const auto& p : params) {
        if (!p.trainable) frozen_before.push_back(*p.value);
    }
    ASSERT_FALSE(frozen_before.empty());

    TrainConfig tc;
    tc.batch_size = 4;
    tc.max_epochs = 3;
    tc.learning_rate = 0.01;
    tc.seed = 55;
    fit_with_early_stopping(model, samples, split, tc);

    std::size_t fi = 0;
    for (const auto& p : model.params()) {
        if (!p.trainable) {
            EXPECT_EQ(p.value->values(), frozen_before[fi].values()) << p.name;
            ++fi;
        }
    }
}
