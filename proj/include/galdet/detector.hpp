#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "galdet/embedder.hpp"
#include "galdet/gallery.hpp"
#include "galdet/rle.hpp"
#include "galdet/segmenter.hpp"
#include "galdet/types.hpp"

namespace galdet {

struct MatchStrategy {
    enum class Kind { kClosest, kCentroid };

    Kind kind = Kind::kClosest;
    /// Best similarity below this labels the patch UNKNOWN.
    double unknown_threshold = 0.5;
    /// Always assign the best gallery id, even under the threshold.
    bool closed_set = false;
};

MatchStrategy::Kind parse_strategy_kind(const std::string& name);
const char* strategy_kind_name(MatchStrategy::Kind kind);

struct MatchResult {
    std::string object_id;  // gallery id or UNKNOWN
    double similarity = 0.0;
};

/// Nearest gallery identity for a normalized embedding: argmax cosine over
/// all cache entries (closest) or per-object centroids (centroid). Ties go
/// to the lexicographically smallest object id, then the lowest
/// augmentation index. The best similarity is reported even when the
/// threshold relabels the match UNKNOWN.
MatchResult match_patch(const Eigen::VectorXf& embedding,
                        const FeatureCache& cache,
                        const MatchStrategy& strategy);

struct DetectOptions {
    int min_area = 50;
    double max_overlap_iou = 0.9;
};

/// Full pipeline on one image: segment, filter, crop, embed, match.
/// Detections come back sorted by score descending (ties keep proposal
/// order). The cache must already match the gallery and embedder; a stale
/// cache is an error, never a silent rebuild.
std::vector<Detection> detect(const SceneImage& image,
                              const GallerySet& gallery,
                              const FeatureCache& cache,
                              const Segmenter& segmenter,
                              const Embedder& embedder,
                              const MatchStrategy& strategy,
                              const DetectOptions& options = {});

/// One serialized detection: a line of JSON with the image id, matched
/// id, ranking score, box and run-length encoded mask.
struct DetectionRecord {
    std::string image_id;
    std::string object_id;
    double score = 0.0;
    Box bbox;
    Rle mask;
};

void append_detection_records(std::ostream& out, const std::string& image_id,
                              const std::vector<Detection>& detections);

std::vector<DetectionRecord> read_detection_records(
    const std::filesystem::path& path);

}  // namespace galdet
