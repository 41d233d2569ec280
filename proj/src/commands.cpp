#include "galdet/commands.hpp"

#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "galdet/binio.hpp"
#include "galdet/detector.hpp"
#include "galdet/ingest.hpp"
#include "galdet/metrics.hpp"
#include "galdet/net.hpp"
#include "galdet/overlay.hpp"
#include "galdet/segmenter.hpp"
#include "galdet/train.hpp"

namespace galdet {

namespace {

namespace fs = std::filesystem;

/// Accepts either one scene directory (holding scene_gt.json) or a
/// dataset root whose sub-directories are scenes.
std::vector<SceneImage> load_scenes(const fs::path& dataset) {
    if (fs::exists(dataset / "scene_gt.json")) {
        return parse_bop_scene(dataset);
    }
    std::vector<fs::path> scene_dirs;
    if (fs::is_directory(dataset)) {
        for (const auto& entry : fs::directory_iterator(dataset)) {
            if (entry.is_directory() &&
                fs::exists(entry.path() / "scene_gt.json")) {
                scene_dirs.push_back(entry.path());
            }
        }
    }
    std::sort(scene_dirs.begin(), scene_dirs.end());
    if (scene_dirs.empty()) {
        throw Error("no scene_gt.json found under " + dataset.string());
    }
    std::vector<SceneImage> scenes;
    for (const fs::path& dir : scene_dirs) {
        std::vector<SceneImage> part = parse_bop_scene(dir);
        scenes.insert(scenes.end(), std::make_move_iterator(part.begin()),
                      std::make_move_iterator(part.end()));
    }
    return scenes;
}

/// Gallery argument can be a folder of object sub-directories or a
/// previously saved gallery snapshot file.
GallerySet load_gallery_arg(const fs::path& path) {
    if (fs::is_directory(path)) {
        return parse_gallery_folder(path);
    }
    return load_gallery(path);
}

fs::path cache_path_for(const RunConfig& config) {
    return config.cache ? *config.cache : config.out / "cache.bin";
}

void write_text_atomic(const fs::path& path, const std::string& text) {
    atomic_write_file(path, [&](std::ostream& out) { out << text; });
}

/// Cache from disk if present and current, rebuilt in memory otherwise.
FeatureCache obtain_cache(const GallerySet& gallery, const Embedder& embedder,
                          const RunConfig& config) {
    std::optional<FeatureCache> existing;
    const fs::path path = cache_path_for(config);
    if (fs::exists(path)) {
        try {
            existing = load_cache(path);
        } catch (const Error& e) {
            std::cout << "note: ignoring unreadable cache (" << e.what()
                      << ")\n";
        }
    }
    EnsureResult result = ensure_cache(gallery, std::move(existing), embedder,
                                       config.num_threads);
    return std::move(result.cache);
}

}  // namespace

int cmd_parse_dataset(const RunConfig& config) {
    validate_config(config);
    const fs::path& dataset = require_path(config.dataset, "dataset");

    const std::vector<SceneImage> scenes = load_scenes(dataset);
    const ClassDataset patches = build_classification_dataset(scenes);

    const fs::path out_dir = config.out / "patches";
    const size_t written = export_patches(patches, out_dir);

    size_t total = 0;
    for (const auto& [object_id, list] : patches) {
        std::cout << object_id << ": " << list.size() << " patches\n";
        total += list.size();
    }
    std::cout << "total: " << total << " patches from " << scenes.size()
              << " frames -> " << out_dir.string() << "\n";
    if (written != total) {
        throw Error("patch export incomplete");
    }
    return 0;
}

int cmd_build_gallery(const RunConfig& config) {
    validate_config(config);
    const fs::path& gallery_path = require_path(config.gallery, "gallery");

    const GallerySet gallery = load_gallery_arg(gallery_path);
    const std::unique_ptr<Embedder> embedder = make_embedder(config.embedder);

    std::optional<FeatureCache> existing;
    const fs::path cache_path = cache_path_for(config);
    if (fs::exists(cache_path)) {
        try {
            existing = load_cache(cache_path);
        } catch (const Error& e) {
            std::cout << "note: existing cache unreadable, rebuilding ("
                      << e.what() << ")\n";
        }
    }

    const EnsureResult result = ensure_cache(gallery, std::move(existing),
                                             *embedder, config.num_threads);
    fs::create_directories(config.out);
    save_gallery(gallery, config.out / "gallery.bin");
    if (result.rebuilt) {
        fs::create_directories(cache_path.parent_path().empty()
                                   ? fs::path(".")
                                   : cache_path.parent_path());
        save_cache(result.cache, cache_path);
        std::cout << "built cache: " << result.cache.entries.size()
                  << " entries = 8 x " << gallery.total_images()
                  << " images, " << gallery.size() << " objects\n";
    } else {
        std::cout << "cache up to date, 0 rebuilt\n";
    }
    std::cout << "gallery hash: " << gallery.content_hash() << "\n";
    return 0;
}

int cmd_train(const RunConfig& config) {
    validate_config(config);
    const fs::path& dataset = require_path(config.dataset, "dataset");
    if (config.embedder.backbone_id != "tiny") {
        throw ConfigError(
            "train requires embedder.backbone=tiny (the trainable backbone); "
            "got '" + config.embedder.backbone_id + "'");
    }

    const std::vector<SceneImage> scenes = load_scenes(dataset);
    const ClassDataset patches = build_classification_dataset(scenes);

    TinyNetParams init;
    if (config.embedder.checkpoint) {
        const Checkpoint ckpt = load_checkpoint(*config.embedder.checkpoint);
        init = ckpt.params;
        std::cout << "warm start from " << config.embedder.checkpoint->string()
                  << " (version " << ckpt.embedder_version << ")\n";
    } else {
        init = init_tiny_net(config.embedder.input_size,
                             config.embedder.feature_dim, config.seed);
    }

    TrainConfig tc = config.train;
    tc.seed = config.seed;
    const TrainResult result = train(patches, tc, std::move(init));

    for (size_t e = 0; e < result.epoch_loss.size(); ++e) {
        std::cout << "epoch " << e << ": mean loss " << result.epoch_loss[e]
                  << "\n";
    }

    nlohmann::ordered_json meta;
    meta["optimizer"] = "adam";
    meta["learning_rate"] = tc.learning_rate;
    meta["batch_size"] = tc.batch_size;
    meta["epochs"] = tc.epochs;
    meta["freeze_backbone_epochs"] = tc.freeze_backbone_epochs;
    meta["positive_fraction"] = tc.positive_fraction;
    meta["steps_per_epoch"] = tc.steps_per_epoch;
    meta["augment_rotations"] = tc.augment_rotations;
    meta["seed"] = tc.seed;

    fs::create_directories(config.out);
    const fs::path ckpt_path = config.out / "checkpoint.bin";
    save_checkpoint(
        Checkpoint{result.params, result.embedder_version, meta.dump()},
        ckpt_path);

    std::string log;
    for (const StepRecord& step : result.steps) {
        nlohmann::ordered_json line;
        line["epoch"] = step.epoch;
        line["step"] = step.step;
        line["loss"] = step.loss;
        log += line.dump();
        log += '\n';
    }
    write_text_atomic(config.out / "train_log.jsonl", log);

    std::cout << "checkpoint: " << ckpt_path.string() << " (version "
              << result.embedder_version << ")\n";
    return 0;
}

int cmd_eval_classifier(const RunConfig& config) {
    validate_config(config);
    const fs::path& dataset = require_path(config.dataset, "dataset");
    const fs::path& gallery_path = require_path(config.gallery, "gallery");

    const std::vector<SceneImage> scenes = load_scenes(dataset);
    const GallerySet gallery = load_gallery_arg(gallery_path);
    const std::unique_ptr<Embedder> embedder = make_embedder(config.embedder);
    const FeatureCache cache = obtain_cache(gallery, *embedder, config);

    std::vector<QueryEmbedding> queries;
    for (const SceneImage& scene : scenes) {
        for (size_t i = 0; i < scene.annotations.size(); ++i) {
            const ImagePatch patch = extract_patch(scene, scene.annotations[i]);
            QueryEmbedding q;
            q.query_id = scene.image_id + "#" + std::to_string(i);
            q.query_class = scene.annotations[i].object_id;
            q.embedding = embedder->embed(patch);
            queries.push_back(std::move(q));
        }
    }

    const std::vector<RankingResult> rankings = rank_queries(queries, cache);
    const CmcReport report = cmc_evaluate(rankings);

    std::cout << render_cmc_table(report);
    fs::create_directories(config.out);
    write_text_atomic(config.out / "cmc_report.json",
                      cmc_report_json(report).dump(2) + "\n");
    return 0;
}

int cmd_detect(const RunConfig& config) {
    validate_config(config);
    const fs::path& dataset = require_path(config.dataset, "dataset");
    const fs::path& gallery_path = require_path(config.gallery, "gallery");

    const std::vector<SceneImage> scenes = load_scenes(dataset);
    const GallerySet gallery = load_gallery_arg(gallery_path);
    const std::unique_ptr<Embedder> embedder = make_embedder(config.embedder);

    const fs::path cache_path = cache_path_for(config);
    if (!fs::exists(cache_path)) {
        throw Error("cache file not found: " + cache_path.string() +
                    "; run build-gallery first");
    }
    const FeatureCache cache = load_cache(cache_path);
    if (!cache_is_current(cache, gallery, *embedder)) {
        throw Error("feature cache at " + cache_path.string() +
                    " is stale (gallery content or embedder version "
                    "changed); run build-gallery to rebuild it");
    }

    const std::unique_ptr<Segmenter> segmenter = make_segmenter(
        config.segmenter.kind,
        config.segmenter.model_path.value_or(fs::path{}));
    MatchStrategy strategy;
    strategy.kind = parse_strategy_kind(config.strategy.kind);
    strategy.unknown_threshold = config.strategy.unknown_threshold;
    strategy.closed_set = config.strategy.closed_set;
    DetectOptions options;
    options.min_area = config.segmenter.min_area;
    options.max_overlap_iou = config.segmenter.max_overlap_iou;

    fs::create_directories(config.out / "overlays");
    std::string records;
    size_t total = 0;
    for (const SceneImage& scene : scenes) {
        const std::vector<Detection> detections = detect(
            scene, gallery, cache, *segmenter, *embedder, strategy, options);
        std::ostringstream lines;
        append_detection_records(lines, scene.image_id, detections);
        records += lines.str();
        total += detections.size();

        const cv::Mat overlay = render_overlay(scene, detections);
        const fs::path overlay_path =
            config.out / "overlays" / overlay_filename(scene.image_id);
        if (!cv::imwrite(overlay_path.string(), overlay)) {
            throw Error("failed to write overlay: " + overlay_path.string());
        }
        std::cout << scene.image_id << ": " << detections.size()
                  << " detections\n";
    }
    write_text_atomic(config.out / "detections.jsonl", records);

    nlohmann::ordered_json meta;
    meta["strategy"] = config.strategy.kind;
    meta["unknown_threshold"] = config.strategy.unknown_threshold;
    meta["closed_set"] = config.strategy.closed_set;
    meta["segmenter"] = config.segmenter.kind;
    meta["min_area"] = config.segmenter.min_area;
    meta["max_overlap_iou"] = config.segmenter.max_overlap_iou;
    meta["embedder"] = config.embedder.backbone_id;
    meta["embedder_version"] = embedder->version();
    meta["gallery_hash"] = gallery.content_hash();
    meta["seed"] = config.seed;
    meta["num_images"] = scenes.size();
    meta["num_detections"] = total;
    write_text_atomic(config.out / "run_meta.json", meta.dump(2) + "\n");

    std::cout << "wrote " << total << " detections -> "
              << (config.out / "detections.jsonl").string() << "\n";
    return 0;
}

int cmd_eval_detector(const RunConfig& config) {
    validate_config(config);
    const fs::path& dataset = require_path(config.dataset, "dataset");
    const fs::path records_path =
        config.detections ? *config.detections : config.out / "detections.jsonl";
    if (!fs::exists(records_path)) {
        throw ConfigError("detections file does not exist: " +
                          records_path.string() + "; run detect first");
    }

    const std::vector<SceneImage> scenes = load_scenes(dataset);
    const std::vector<DetectionRecord> records =
        read_detection_records(records_path);
    const CocoDataset data = make_coco_input(scenes, records);
    const DetectionReport report = coco_evaluate(data);

    std::cout << render_detection_table(report);
    fs::create_directories(config.out);
    write_text_atomic(config.out / "detection_report.json",
                      detection_report_json(report).dump(2) + "\n");
    return 0;
}

}  // namespace galdet
