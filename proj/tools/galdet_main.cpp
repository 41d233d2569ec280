// Command-line front end: open-set detection against a user-supplied
// object gallery. Subcommands cover dataset parsing, gallery caching,
// training, detection and both evaluators.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "galdet/commands.hpp"
#include "galdet/config.hpp"

namespace {

struct Overrides {
    std::optional<std::string> config_path;
    std::optional<std::string> dataset;
    std::optional<std::string> gallery;
    std::optional<std::string> cache;
    std::optional<std::string> detections;
    std::optional<std::string> out;
    std::optional<uint64_t> seed;
    std::optional<int> num_threads;

    std::optional<std::string> segmenter_kind;
    std::optional<std::string> segmenter_model;
    std::optional<int> min_area;
    std::optional<double> max_overlap_iou;

    std::optional<std::string> backbone;
    std::optional<int> input_size;
    std::optional<int> feature_dim;
    std::optional<std::string> checkpoint;

    std::optional<std::string> strategy;
    std::optional<double> unknown_threshold;
    bool closed_set = false;

    std::optional<int> epochs;
    std::optional<int> freeze_epochs;
    std::optional<double> positive_fraction;
    std::optional<int> batch_size;
    std::optional<double> learning_rate;
    std::optional<int> steps_per_epoch;
};

galdet::RunConfig build_config(const Overrides& ov) {
    galdet::RunConfig config;
    if (ov.config_path) {
        config = galdet::load_run_config(*ov.config_path);
    }
    const auto set_path = [](const std::optional<std::string>& v,
                             std::optional<std::filesystem::path>& field) {
        if (v) field = *v;
    };
    set_path(ov.dataset, config.dataset);
    set_path(ov.gallery, config.gallery);
    set_path(ov.cache, config.cache);
    set_path(ov.detections, config.detections);
    set_path(ov.segmenter_model, config.segmenter.model_path);
    set_path(ov.checkpoint, config.embedder.checkpoint);
    if (ov.out) config.out = *ov.out;
    if (ov.seed) config.seed = *ov.seed;
    if (ov.num_threads) config.num_threads = *ov.num_threads;
    if (ov.segmenter_kind) config.segmenter.kind = *ov.segmenter_kind;
    if (ov.min_area) config.segmenter.min_area = *ov.min_area;
    if (ov.max_overlap_iou) config.segmenter.max_overlap_iou = *ov.max_overlap_iou;
    if (ov.backbone) config.embedder.backbone_id = *ov.backbone;
    if (ov.input_size) config.embedder.input_size = *ov.input_size;
    if (ov.feature_dim) config.embedder.feature_dim = *ov.feature_dim;
    if (ov.strategy) config.strategy.kind = *ov.strategy;
    if (ov.unknown_threshold) config.strategy.unknown_threshold = *ov.unknown_threshold;
    if (ov.closed_set) config.strategy.closed_set = true;
    if (ov.epochs) config.train.epochs = *ov.epochs;
    if (ov.freeze_epochs) config.train.freeze_backbone_epochs = *ov.freeze_epochs;
    if (ov.positive_fraction) config.train.positive_fraction = *ov.positive_fraction;
    if (ov.batch_size) config.train.batch_size = *ov.batch_size;
    if (ov.learning_rate) config.train.learning_rate = *ov.learning_rate;
    if (ov.steps_per_epoch) config.train.steps_per_epoch = *ov.steps_per_epoch;
    return config;
}

void add_common_flags(CLI::App* cmd, Overrides& ov) {
    cmd->add_option("--config", ov.config_path, "JSON config file");
    cmd->add_option("--seed", ov.seed, "seed for all stochastic behavior");
    cmd->add_option("--out", ov.out, "output directory (default: out)");
    cmd->add_option("--threads", ov.num_threads, "worker threads (0 = auto)");
}

void add_embedder_flags(CLI::App* cmd, Overrides& ov) {
    cmd->add_option("--backbone", ov.backbone,
                    "embedder backbone: grid-mean, tiny or onnx");
    cmd->add_option("--input-size", ov.input_size, "model input edge");
    cmd->add_option("--feature-dim", ov.feature_dim, "embedding width");
    cmd->add_option("--checkpoint", ov.checkpoint, "embedder weights file");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "open-set object detection against a user-supplied image gallery"};
    app.require_subcommand(1);

    Overrides ov;

    CLI::App* parse = app.add_subcommand(
        "parse-dataset", "extract masked per-object patches from scenes");
    add_common_flags(parse, ov);
    parse->add_option("--dataset", ov.dataset, "scene directory or root");

    CLI::App* build = app.add_subcommand(
        "build-gallery", "embed a gallery folder and persist the cache");
    add_common_flags(build, ov);
    add_embedder_flags(build, ov);
    build->add_option("--gallery", ov.gallery, "gallery folder or snapshot");
    build->add_option("--cache", ov.cache, "cache file path");

    CLI::App* train = app.add_subcommand(
        "train", "train the siamese embedder on dataset patches");
    add_common_flags(train, ov);
    add_embedder_flags(train, ov);
    train->add_option("--dataset", ov.dataset, "scene directory or root");
    train->add_option("--epochs", ov.epochs, "training epochs");
    train->add_option("--freeze-epochs", ov.freeze_epochs,
                      "epochs with the backbone frozen");
    train->add_option("--positive-fraction", ov.positive_fraction,
                      "fraction of same-class pairs");
    train->add_option("--batch-size", ov.batch_size, "pairs per step");
    train->add_option("--learning-rate", ov.learning_rate, "optimizer rate");
    train->add_option("--steps-per-epoch", ov.steps_per_epoch,
                      "steps per epoch (0 = derive from dataset size)");

    CLI::App* evalc = app.add_subcommand(
        "eval-classifier", "rank dataset patches against the gallery (CMC)");
    add_common_flags(evalc, ov);
    add_embedder_flags(evalc, ov);
    evalc->add_option("--dataset", ov.dataset, "scene directory or root");
    evalc->add_option("--gallery", ov.gallery, "gallery folder or snapshot");
    evalc->add_option("--cache", ov.cache, "cache file path");

    CLI::App* det = app.add_subcommand(
        "detect", "segment scenes and classify against the gallery");
    add_common_flags(det, ov);
    add_embedder_flags(det, ov);
    det->add_option("--dataset", ov.dataset, "scene directory or root");
    det->add_option("--gallery", ov.gallery, "gallery folder or snapshot");
    det->add_option("--cache", ov.cache, "cache file path");
    det->add_option("--segmenter", ov.segmenter_kind, "oracle or model");
    det->add_option("--segmenter-model", ov.segmenter_model,
                    "segmentation graph for --segmenter model");
    det->add_option("--min-area", ov.min_area, "drop proposals below (px)");
    det->add_option("--max-overlap-iou", ov.max_overlap_iou,
                    "suppress overlapping proposals above this IoU");
    det->add_option("--strategy", ov.strategy, "closest or centroid");
    det->add_option("--unknown-threshold", ov.unknown_threshold,
                    "similarity floor below which a match is UNKNOWN");
    det->add_flag("--closed-set", ov.closed_set,
                  "always assign the best gallery id (no UNKNOWN)");

    CLI::App* evald = app.add_subcommand(
        "eval-detector", "score detection records against ground truth");
    add_common_flags(evald, ov);
    evald->add_option("--dataset", ov.dataset, "scene directory or root");
    evald->add_option("--detections", ov.detections,
                      "detection records (default: <out>/detections.jsonl)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // Treat bad invocations like bad configs; --help lands here too.
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        const galdet::RunConfig config = build_config(ov);
        if (parse->parsed()) return galdet::cmd_parse_dataset(config);
        if (build->parsed()) return galdet::cmd_build_gallery(config);
        if (train->parsed()) return galdet::cmd_train(config);
        if (evalc->parsed()) return galdet::cmd_eval_classifier(config);
        if (det->parsed()) return galdet::cmd_detect(config);
        if (evald->parsed()) return galdet::cmd_eval_detector(config);
        std::cerr << "error: no command selected\n";
        return 2;
    } catch (const galdet::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
