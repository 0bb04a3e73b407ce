#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "tempofit/cli.hpp"
#include "tempofit/config.hpp"

using namespace tempofit;

namespace {

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = std::filesystem::temp_directory_path() /
               ("tempofit_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        std::filesystem::remove_all(dir_);
        std::filesystem::create_directories(dir_);
    }

    void TearDown() override { std::filesystem::remove_all(dir_); }

    std::filesystem::path path(const std::string& name) const { return dir_ / name; }

    std::string write_file(const std::string& name, const std::string& content) {
        const auto p = path(name);
        std::ofstream out(p);
        out << content;
        return p.string();
    }

    static std::string slurp(const std::filesystem::path& p) {
        std::ifstream in(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    }

    // tiny trainable setup: 4-class moving squares at 8x8
    void make_synth_dataset(const std::string& subdir, std::size_t per_class = 4) {
        SynthOptions so;
        so.out_dir = path(subdir).string();
        so.per_class = per_class;
        so.frames = 4;
        so.side = 8;
        so.square = 3;
        so.seed = 5;
        std::ostringstream out, err;
        ASSERT_EQ(cmd_synth(so, out, err), 0) << err.str();
    }

    std::string small_config(const std::string& extra = "") {
        return write_file("run.cfg",
                          "extractor = conv_small\n"
                          "conv_filters = 2\n"
                          "frames = 4\n"
                          "height = 8\n"
                          "width = 8\n"
                          "channels = 1\n"
                          "classes = 4\n"
                          "lstm_hidden = 4\n"
                          "attn_hidden = 3\n"
                          "max_epochs = 2\n"
                          "batch_size = 4\n"
                          "lr = 0.01\n"
                          "seed = 11\n" +
                          extra);
    }

    std::filesystem::path dir_;
};

}  // namespace

TEST(RunConfig, ParsesCommentsAndDefaults) {
    const auto cfg = RunConfig::parse(
        "# a comment\n"
        "classes = 4  # trailing comment\n"
        "\n"
        "extractor = vit_toy\n"
        "height = 16\nwidth = 16\nchannels = 1\n");
    EXPECT_EQ(cfg.model.classes, 4u);
    EXPECT_EQ(cfg.model.extractor.kind, ExtractorKind::vit_toy);
    EXPECT_EQ(cfg.train.batch_size, 32u);       // defaults
    EXPECT_DOUBLE_EQ(cfg.train.learning_rate, 1e-4);
    EXPECT_EQ(cfg.train.patience, 5u);
    EXPECT_EQ(cfg.precision, Precision::f32);
}

TEST(RunConfig, RejectsUnknownKey) {
    EXPECT_THROW(RunConfig::parse("classes = 2\nbogus_key = 1\n"), ConfigError);
}

TEST(RunConfig, RejectsDuplicateKey) {
    EXPECT_THROW(RunConfig::parse("classes = 2\nclasses = 3\n"), ConfigError);
}

TEST(RunConfig, RequiresClasses) {
    EXPECT_THROW(RunConfig::parse("extractor = conv_small\n"), ConfigError);
}

TEST(RunConfig, RejectsBadValues) {
    EXPECT_THROW(RunConfig::parse("classes = two\n"), ConfigError);
    EXPECT_THROW(RunConfig::parse("classes = 2\nlr = 0\n"), ConfigError);
    EXPECT_THROW(RunConfig::parse("classes = 2\nprecision = f16\n"), ConfigError);
    EXPECT_THROW(RunConfig::parse("classes = 2\ntopk = 3\n"), ConfigError);
}

TEST(RunConfig, RoundTripsThroughText) {
    const auto cfg = RunConfig::parse("classes = 3\nextractor = precomputed\nfeature_dim = 7\nseed = 99\nlr = 0.001\n");
    const auto cfg2 = RunConfig::parse(cfg.to_text());
    EXPECT_EQ(cfg2.model.classes, 3u);
    EXPECT_EQ(cfg2.model.extractor.feature_dim, 7u);
    EXPECT_EQ(cfg2.train.seed, 99u);
    EXPECT_DOUBLE_EQ(cfg2.train.learning_rate, 0.001);
    EXPECT_EQ(cfg.to_text(), cfg2.to_text());
}

TEST_F(CliTest, SynthProducesLoadableDataset) {
    make_synth_dataset("data");
    const auto manifest = load_manifest(path("data/manifest.csv"), path("data/labels.txt"));
    EXPECT_EQ(manifest.entries.size(), 16u);
    EXPECT_EQ(manifest.num_classes(), 4u);
    const auto samples = load_samples<float>(manifest);
    EXPECT_EQ(samples[0].data.shape(), (Shape{4, 8, 8, 1}));
}

TEST_F(CliTest, PreprocessFrameDirectories) {
    // build three tiny PGM clips
    std::filesystem::create_directories(path("raw"));
    for (int clip = 0; clip < 3; ++clip) {
        const auto cd = path("raw/clip" + std::to_string(clip));
        std::filesystem::create_directories(cd);
        for (int f = 0; f < 6; ++f) {
            std::ofstream out(cd / ("f" + std::to_string(f) + ".pgm"), std::ios::binary);
            out << "P5\n4 4\n255\n";
            for (int i = 0; i < 16; ++i) out.put(static_cast<char>(40 * clip + f));
        }
    }
    write_file("raw/manifest.csv",
               "path,label\nclip0,up\nclip1,down\nclip2,up\n");
    write_file("raw/labels.txt", "up\ndown\n");

    PreprocessOptions opt;
    opt.manifest = path("raw/manifest.csv").string();
    opt.out_dir = path("out").string();
    opt.frames = 4;
    opt.side_small = 4;
    opt.side_large = 4;
    std::ostringstream out, err;
    ASSERT_EQ(cmd_preprocess(opt, out, err), 0) << err.str();

    const auto manifest = load_manifest(path("out/manifest.csv"), path("out/labels.txt"));
    EXPECT_EQ(manifest.entries.size(), 3u);
    const auto samples = load_samples<float>(manifest);
    EXPECT_EQ(samples[0].data.shape(), (Shape{4, 4, 4, 1}));

    // re-run: byte-identical outputs
    const auto first = slurp(manifest.resolve(0));
    std::ostringstream out2, err2;
    ASSERT_EQ(cmd_preprocess(opt, out2, err2), 0);
    EXPECT_EQ(slurp(manifest.resolve(0)), first);
}

TEST_F(CliTest, PreprocessPartialFailure) {
    std::filesystem::create_directories(path("raw/clipA"));
    {
        std::ofstream out(path("raw/clipA/f0.pgm"), std::ios::binary);
        out << "P5\n2 2\n255\nABCD";
    }
    write_file("raw/manifest.csv", "path,label\nclipA,up\nmissing_clip,down\n");
    write_file("raw/labels.txt", "up\ndown\n");

    PreprocessOptions opt;
    opt.manifest = path("raw/manifest.csv").string();
    opt.out_dir = path("out").string();
    opt.frames = 2;
    opt.side_small = 2;
    opt.side_large = 2;
    std::ostringstream out, err;
    EXPECT_EQ(cmd_preprocess(opt, out, err), 1);  // nonzero: one sample failed
    EXPECT_NE(err.str().find("missing_clip"), std::string::npos);
    // the good sample still landed in the output manifest
    const auto manifest = load_manifest(path("out/manifest.csv"), path("out/labels.txt"));
    EXPECT_EQ(manifest.entries.size(), 1u);
}

TEST_F(CliTest, TrainEvalRoundTrip) {
    make_synth_dataset("data");
    const auto cfg_path = small_config();

    TrainOptions topt;
    topt.config = cfg_path;
    topt.manifest = path("data/manifest.csv").string();
    topt.out_checkpoint = path("model.ckpt").string();
    topt.log_csv = path("log.csv").string();
    std::ostringstream out, err;
    ASSERT_EQ(cmd_train(topt, out, err), 0) << err.str();
    ASSERT_TRUE(std::filesystem::exists(path("model.ckpt")));
    ASSERT_TRUE(std::filesystem::exists(path("log.csv")));

    const std::string log = slurp(path("log.csv"));
    EXPECT_NE(log.find("epoch,train_loss,train_acc,val_loss,val_acc"), std::string::npos);
    EXPECT_GT(std::count(log.begin(), log.end(), '\n'), 1);  // header + >= 1 row

    EvalOptions eopt;
    eopt.checkpoint = topt.out_checkpoint;
    eopt.manifest = topt.manifest;
    eopt.split = "test";
    eopt.report_csv = path("report.csv").string();
    eopt.confusion_csv = path("confusion.csv").string();
    std::ostringstream eout, eerr;
    ASSERT_EQ(cmd_eval(eopt, eout, eerr), 0) << eerr.str();

    const std::string report = slurp(path("report.csv"));
    EXPECT_NE(report.find("accuracy,"), std::string::npos);
    // weighted recall == accuracy, both serialized identically
    std::string acc_line, recall_line;
    std::istringstream rs(report);
    std::string line;
    while (std::getline(rs, line)) {
        if (line.rfind("accuracy,", 0) == 0) acc_line = line.substr(9);
        if (line.rfind("recall_weighted,", 0) == 0) recall_line = line.substr(16);
    }
    EXPECT_EQ(acc_line, recall_line);
}

TEST_F(CliTest, TrainDeterminismAcrossRuns) {
    make_synth_dataset("data");
    const auto cfg_path = small_config();

    auto run = [&](const std::string& tag) {
        TrainOptions topt;
        topt.config = cfg_path;
        topt.manifest = path("data/manifest.csv").string();
        topt.out_checkpoint = path("model_" + tag + ".ckpt").string();
        topt.log_csv = path("log_" + tag + ".csv").string();
        std::ostringstream out, err;
        EXPECT_EQ(cmd_train(topt, out, err), 0) << err.str();
    };
    run("a");
    run("b");
    EXPECT_EQ(slurp(path("log_a.csv")), slurp(path("log_b.csv")));
    EXPECT_EQ(slurp(path("model_a.ckpt")), slurp(path("model_b.ckpt")));
}

TEST_F(CliTest, TrainRejectsBadConfigWithoutOutputs) {
    make_synth_dataset("data");
    const auto cfg_path = write_file("bad.cfg", "classes = 4\nnot_a_key = 1\n");
    TrainOptions topt;
    topt.config = cfg_path;
    topt.manifest = path("data/manifest.csv").string();
    topt.out_checkpoint = path("model.ckpt").string();
    topt.log_csv = path("log.csv").string();
    std::ostringstream out, err;
    EXPECT_EQ(cmd_train(topt, out, err), 1);
    EXPECT_FALSE(std::filesystem::exists(path("model.ckpt")));
    EXPECT_FALSE(std::filesystem::exists(path("log.csv")));
    EXPECT_NE(err.str().find("not_a_key"), std::string::npos);
}

TEST_F(CliTest, EvalTopkOneEqualsAccuracy) {
    make_synth_dataset("data");
    const auto cfg_path = small_config();
    TrainOptions topt;
    topt.config = cfg_path;
    topt.manifest = path("data/manifest.csv").string();
    topt.out_checkpoint = path("model.ckpt").string();
    topt.log_csv = path("log.csv").string();
    std::ostringstream out, err;
    ASSERT_EQ(cmd_train(topt, out, err), 0) << err.str();

    EvalOptions eopt;
    eopt.checkpoint = topt.out_checkpoint;
    eopt.manifest = topt.manifest;
    eopt.split = "all";
    eopt.topk = 1;
    eopt.report_csv = path("report.csv").string();
    std::ostringstream eout, eerr;
    ASSERT_EQ(cmd_eval(eopt, eout, eerr), 0) << eerr.str();
    const std::string report = slurp(path("report.csv"));
    std::string acc, top1;
    std::istringstream rs(report);
    std::string line;
    while (std::getline(rs, line)) {
        if (line.rfind("accuracy,", 0) == 0) acc = line.substr(9);
        if (line.rfind("top1_accuracy,", 0) == 0) top1 = line.substr(14);
    }
    ASSERT_FALSE(acc.empty());
    EXPECT_EQ(acc, top1);
}

TEST_F(CliTest, EvalMissingCheckpointFails) {
    EvalOptions eopt;
    eopt.checkpoint = path("nope.ckpt").string();
    eopt.manifest = path("nope.csv").string();
    std::ostringstream out, err;
    EXPECT_EQ(cmd_eval(eopt, out, err), 1);
}

TEST_F(CliTest, GradcheckPassesAndHonorsCorruptHook) {
    const auto cfg_path = write_file("grad.cfg",
                                     "extractor = conv_small\n"
                                     "conv_filters = 2\n"
                                     "frames = 3\n"
                                     "height = 6\nwidth = 6\nchannels = 1\n"
                                     "classes = 3\n"
                                     "lstm_hidden = 4\nattn_hidden = 3\nseed = 13\n");
    GradcheckOptions gopt;
    gopt.config = cfg_path;
    gopt.probes = 16;
    std::ostringstream out, err;
    EXPECT_EQ(cmd_gradcheck(gopt, out, err), 0) << err.str() << out.str();
    EXPECT_NE(out.str().find("PASS lstm.wi"), std::string::npos);

    GradcheckOptions bad = gopt;
    bad.corrupt = "attn.wh";
    std::ostringstream out2, err2;
    EXPECT_EQ(cmd_gradcheck(bad, out2, err2), 1);
    EXPECT_NE(out2.str().find("FAIL attn.wh"), std::string::npos);
    EXPECT_NE(out2.str().find("PASS lstm.wi"), std::string::npos);  // only that layer fails

    GradcheckOptions zero = gopt;
    zero.tolerance = 0.0;
    std::ostringstream out3, err3;
    EXPECT_EQ(cmd_gradcheck(zero, out3, err3), 1);  // finite differences are inexact
}

TEST_F(CliTest, CountParamsConservation) {
    const std::string base =
        "extractor = conv_small\n"
        "conv_filters = 3\n"
        "frames = 3\nheight = 8\nwidth = 8\nchannels = 1\n"
        "classes = 2\nlstm_hidden = 4\nattn_hidden = 3\n";
    const auto unfrozen = write_file("a.cfg", base);
    const auto frozen = write_file("b.cfg", base + "frozen = true\n");

    auto run = [&](const std::string& p) {
        CountParamsOptions opt;
        opt.config = p;
        std::ostringstream out, err;
        EXPECT_EQ(cmd_count_params(opt, out, err), 0) << err.str();
        return out.str();
    };
    const std::string a = run(unfrozen);
    const std::string b = run(frozen);

    auto field = [](const std::string& s, const std::string& key) {
        const auto pos = s.find(key + " ");
        return std::stoull(s.substr(pos + key.size() + 1));
    };
    EXPECT_EQ(field(a, "total"), field(b, "total"));
    EXPECT_EQ(field(a, "non_trainable"), 0ull);
    EXPECT_GT(field(b, "non_trainable"), 0ull);
    EXPECT_EQ(field(b, "trainable") + field(b, "non_trainable"), field(b, "total"));

    // micro config: hand-computable
    // conv 3x3x1x3 + 3 = 30; lstm 4*(4*(48+4)+4) = 848; attn 3*4+3+3+1 = 19; fc 2*4+2 = 10
    EXPECT_EQ(field(a, "total"), 30ull + 848ull + 19ull + 10ull);
}
