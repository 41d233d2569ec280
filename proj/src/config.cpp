#include "galdet/config.hpp"

#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

namespace galdet {

namespace {

using nlohmann::json;

void check_keys(const json& j, const std::set<std::string>& allowed,
                const std::string& where) {
    for (const auto& [key, value] : j.items()) {
        if (allowed.count(key) == 0) {
            throw ConfigError("unknown config key '" + key + "' in " + where);
        }
    }
}

std::optional<std::filesystem::path> opt_path(const json& j, const char* key) {
    if (!j.contains(key)) {
        return std::nullopt;
    }
    return std::filesystem::path(j.at(key).get<std::string>());
}

}  // namespace

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("config file not found: " + path.string());
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("malformed JSON in " + path.string() + ": " +
                          e.what());
    }

    RunConfig config;
    try {
        check_keys(j,
                   {"dataset", "gallery", "cache", "detections", "segmenter",
                    "embedder", "strategy", "train", "out", "seed",
                    "num_threads"},
                   path.string());
        config.dataset = opt_path(j, "dataset");
        config.gallery = opt_path(j, "gallery");
        config.cache = opt_path(j, "cache");
        config.detections = opt_path(j, "detections");
        if (j.contains("out")) {
            config.out = j.at("out").get<std::string>();
        }
        if (j.contains("seed")) {
            config.seed = j.at("seed").get<uint64_t>();
        }
        if (j.contains("num_threads")) {
            config.num_threads = j.at("num_threads").get<int>();
        }

        if (j.contains("segmenter")) {
            const json& s = j.at("segmenter");
            check_keys(s, {"kind", "model", "min_area", "max_overlap_iou"},
                       path.string() + " segmenter");
            if (s.contains("kind")) {
                config.segmenter.kind = s.at("kind").get<std::string>();
            }
            config.segmenter.model_path = opt_path(s, "model");
            if (s.contains("min_area")) {
                config.segmenter.min_area = s.at("min_area").get<int>();
            }
            if (s.contains("max_overlap_iou")) {
                config.segmenter.max_overlap_iou =
                    s.at("max_overlap_iou").get<double>();
            }
        }

        if (j.contains("embedder")) {
            const json& e = j.at("embedder");
            check_keys(e, {"backbone", "input_size", "feature_dim", "checkpoint"},
                       path.string() + " embedder");
            if (e.contains("backbone")) {
                config.embedder.backbone_id = e.at("backbone").get<std::string>();
            }
            if (e.contains("input_size")) {
                config.embedder.input_size = e.at("input_size").get<int>();
            }
            if (e.contains("feature_dim")) {
                config.embedder.feature_dim = e.at("feature_dim").get<int>();
            }
            config.embedder.checkpoint = opt_path(e, "checkpoint");
        }

        if (j.contains("strategy")) {
            const json& s = j.at("strategy");
            check_keys(s, {"kind", "unknown_threshold", "closed_set"},
                       path.string() + " strategy");
            if (s.contains("kind")) {
                config.strategy.kind = s.at("kind").get<std::string>();
            }
            if (s.contains("unknown_threshold")) {
                config.strategy.unknown_threshold =
                    s.at("unknown_threshold").get<double>();
            }
            if (s.contains("closed_set")) {
                config.strategy.closed_set = s.at("closed_set").get<bool>();
            }
        }

        if (j.contains("train")) {
            const json& t = j.at("train");
            check_keys(t,
                       {"epochs", "freeze_backbone_epochs", "positive_fraction",
                        "batch_size", "learning_rate", "steps_per_epoch",
                        "augment_rotations"},
                       path.string() + " train");
            if (t.contains("epochs")) {
                config.train.epochs = t.at("epochs").get<int>();
            }
            if (t.contains("freeze_backbone_epochs")) {
                config.train.freeze_backbone_epochs =
                    t.at("freeze_backbone_epochs").get<int>();
            }
            if (t.contains("positive_fraction")) {
                config.train.positive_fraction =
                    t.at("positive_fraction").get<double>();
            }
            if (t.contains("batch_size")) {
                config.train.batch_size = t.at("batch_size").get<int>();
            }
            if (t.contains("learning_rate")) {
                config.train.learning_rate = t.at("learning_rate").get<double>();
            }
            if (t.contains("steps_per_epoch")) {
                config.train.steps_per_epoch = t.at("steps_per_epoch").get<int>();
            }
            if (t.contains("augment_rotations")) {
                config.train.augment_rotations =
                    t.at("augment_rotations").get<bool>();
            }
        }
    } catch (const json::exception& e) {
        throw ConfigError("bad value in " + path.string() + ": " + e.what());
    }
    return config;
}

const std::filesystem::path& require_path(
    const std::optional<std::filesystem::path>& path, const char* what) {
    if (!path) {
        throw ConfigError(std::string(what) +
                          " is required (set it in the config or via flag)");
    }
    if (!std::filesystem::exists(*path)) {
        throw ConfigError(std::string(what) + " does not exist: " +
                          path->string());
    }
    return *path;
}

void validate_config(const RunConfig& config) {
    if (config.segmenter.kind != "oracle" && config.segmenter.kind != "model") {
        throw ConfigError("segmenter.kind must be oracle or model, got '" +
                          config.segmenter.kind + "'");
    }
    if (config.segmenter.kind == "model" && !config.segmenter.model_path) {
        throw ConfigError("segmenter.kind=model requires segmenter.model");
    }
    if (config.segmenter.min_area < 0) {
        throw ConfigError("segmenter.min_area must be >= 0");
    }
    if (config.segmenter.max_overlap_iou < 0.0 ||
        config.segmenter.max_overlap_iou > 1.0) {
        throw ConfigError("segmenter.max_overlap_iou must lie in [0, 1]");
    }
    if (config.strategy.kind != "closest" && config.strategy.kind != "centroid") {
        throw ConfigError("strategy.kind must be closest or centroid, got '" +
                          config.strategy.kind + "'");
    }
    if (config.strategy.unknown_threshold < -1.0 ||
        config.strategy.unknown_threshold > 1.0) {
        throw ConfigError("strategy.unknown_threshold must lie in [-1, 1]");
    }
    if (config.embedder.input_size <= 0) {
        throw ConfigError("embedder.input_size must be positive");
    }
    if (config.embedder.feature_dim <= 0) {
        throw ConfigError("embedder.feature_dim must be positive");
    }
    if (config.train.epochs < 0) {
        throw ConfigError("train.epochs must be >= 0");
    }
    if (config.train.freeze_backbone_epochs < 0 ||
        config.train.freeze_backbone_epochs > config.train.epochs) {
        throw ConfigError("train.freeze_backbone_epochs must lie in [0, epochs]");
    }
    if (config.train.positive_fraction <= 0.0 ||
        config.train.positive_fraction >= 1.0) {
        throw ConfigError(
            "train.positive_fraction must lie strictly between 0 and 1");
    }
    if (config.train.batch_size < 1) {
        throw ConfigError("train.batch_size must be >= 1");
    }
    if (config.train.learning_rate <= 0.0) {
        throw ConfigError("train.learning_rate must be positive");
    }
    if (config.train.steps_per_epoch < 0) {
        throw ConfigError("train.steps_per_epoch must be >= 0");
    }
    if (config.num_threads < 0) {
        throw ConfigError("num_threads must be >= 0");
    }
}

}  // namespace galdet
