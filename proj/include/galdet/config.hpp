#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "galdet/embedder.hpp"
#include "galdet/train.hpp"

namespace galdet {

struct SegmenterConfig {
    std::string kind = "oracle";  // or "model"
    std::optional<std::filesystem::path> model_path;
    int min_area = 50;
    double max_overlap_iou = 0.9;
};

struct StrategyConfig {
    std::string kind = "closest";  // or "centroid"
    double unknown_threshold = 0.5;
    bool closed_set = false;
};

/// Everything one command run needs, loadable from a single JSON file.
/// Command-line flags override individual fields after loading.
struct RunConfig {
    std::optional<std::filesystem::path> dataset;   // BOP-style scene dir
    std::optional<std::filesystem::path> gallery;   // gallery folder
    std::optional<std::filesystem::path> cache;     // cache file override
    std::optional<std::filesystem::path> detections;  // records to evaluate

    SegmenterConfig segmenter;
    EmbedderConfig embedder;
    StrategyConfig strategy;
    TrainConfig train;

    std::filesystem::path out = "out";
    uint64_t seed = 0;
    int num_threads = 0;  // 0 = hardware default
};

/// Parses a JSON config file. Unknown keys, malformed JSON and wrong
/// types raise ConfigError naming the file.
RunConfig load_run_config(const std::filesystem::path& path);

/// ConfigError unless the path is set and exists.
const std::filesystem::path& require_path(
    const std::optional<std::filesystem::path>& path, const char* what);

/// Cross-field validation shared by every command (ranges, enum values).
void validate_config(const RunConfig& config);

}  // namespace galdet
