#include <iostream>

#include <CLI11.hpp>

#include "tempofit/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"tempofit: fitness-movement recognition pipeline"};
    app.require_subcommand(1);

    tempofit::PreprocessOptions pre;
    auto* cmd_pre = app.add_subcommand("preprocess", "sample, resize and normalize frame directories into FSEQ files");
    cmd_pre->add_option("--manifest", pre.manifest, "input manifest CSV (path,label)")->required();
    cmd_pre->add_option("--labels", pre.labels, "labels file (default: labels.txt next to the manifest)");
    cmd_pre->add_option("--out-dir", pre.out_dir, "output directory")->required();
    cmd_pre->add_option("--frames", pre.frames, "frames to sample per clip");
    cmd_pre->add_option("--side-small", pre.side_small, "storage-stage square side");
    cmd_pre->add_option("--side-large", pre.side_large, "final square side");
    cmd_pre->add_flag("--single-stage", pre.single_stage, "resize directly to the final side");

    tempofit::TrainOptions train;
    auto* cmd_tr = app.add_subcommand("train", "train a model with early stopping");
    cmd_tr->add_option("--config", train.config, "run configuration file")->required();
    cmd_tr->add_option("--manifest", train.manifest, "dataset manifest CSV")->required();
    cmd_tr->add_option("--labels", train.labels, "labels file");
    cmd_tr->add_option("--out", train.out_checkpoint, "output checkpoint path")->required();
    cmd_tr->add_option("--log", train.log_csv, "training log CSV path")->required();

    tempofit::EvalOptions eval;
    auto* cmd_ev = app.add_subcommand("eval", "evaluate a checkpoint");
    cmd_ev->add_option("--checkpoint", eval.checkpoint, "checkpoint to evaluate")->required();
    cmd_ev->add_option("--manifest", eval.manifest, "dataset manifest CSV")->required();
    cmd_ev->add_option("--labels", eval.labels, "labels file");
    cmd_ev->add_option("--split", eval.split, "test (per the training split) or all");
    cmd_ev->add_option("--topk", eval.topk, "top-k accuracy cutoff (default: config)");
    cmd_ev->add_option("--report", eval.report_csv, "metrics report CSV output");
    cmd_ev->add_option("--confusion", eval.confusion_csv, "confusion matrix CSV output");

    tempofit::GradcheckOptions grad;
    auto* cmd_gc = app.add_subcommand("gradcheck", "verify analytic gradients against finite differences");
    cmd_gc->add_option("--config", grad.config, "run configuration file")->required();
    cmd_gc->add_option("--seed", grad.seed, "override the config seed");
    cmd_gc->add_option("--tolerance", grad.tolerance, "max allowed gradient error");
    cmd_gc->add_option("--probes", grad.probes, "finite-difference probes per tensor (0 = all)");
    cmd_gc->add_option("--corrupt", grad.corrupt, "test hook: corrupt this tensor's analytic gradient");

    tempofit::CountParamsOptions cp;
    auto* cmd_cp = app.add_subcommand("count-params", "print total/trainable/non-trainable parameter counts");
    cmd_cp->add_option("--config", cp.config, "run configuration file")->required();

    tempofit::SynthOptions synth;
    auto* cmd_sy = app.add_subcommand("synth", "generate the moving-square demo dataset");
    cmd_sy->add_option("--out-dir", synth.out_dir, "output directory")->required();
    cmd_sy->add_option("--per-class", synth.per_class, "sequences per direction class");
    cmd_sy->add_option("--frames", synth.frames, "frames per sequence");
    cmd_sy->add_option("--side", synth.side, "frame side length");
    cmd_sy->add_option("--square", synth.square, "square side length");
    cmd_sy->add_option("--sigma", synth.sigma, "pixel noise standard deviation");
    cmd_sy->add_option("--seed", synth.seed, "generator seed");

    CLI11_PARSE(app, argc, argv);

    if (cmd_pre->parsed()) return tempofit::cmd_preprocess(pre, std::cout, std::cerr);
    if (cmd_tr->parsed()) return tempofit::cmd_train(train, std::cout, std::cerr);
    if (cmd_ev->parsed()) return tempofit::cmd_eval(eval, std::cout, std::cerr);
    if (cmd_gc->parsed()) return tempofit::cmd_gradcheck(grad, std::cout, std::cerr);
    if (cmd_cp->parsed()) return tempofit::cmd_count_params(cp, std::cout, std::cerr);
    if (cmd_sy->parsed()) return tempofit::cmd_synth(synth, std::cout, std::cerr);
    return 1;
}
