#pragma once

#include <Eigen/Core>

#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "galdet/detector.hpp"
#include "galdet/gallery.hpp"
#include "galdet/rle.hpp"
#include "galdet/types.hpp"

namespace galdet {

// ---- Re-identification metrics (CMC / mAP over rankings) ----

struct QueryEmbedding {
    std::string query_id;
    std::string query_class;
    Eigen::VectorXf embedding;
};

struct RankedEntry {
    std::string gallery_class;
    uint32_t augmentation_index = 0;
    double similarity = 0.0;
};

struct RankingResult {
    std::string query_id;
    std::string query_class;
    /// All cache entries ordered by descending similarity; ties keep the
    /// cache's (object_id, augmentation_index) order.
    std::vector<RankedEntry> ranking;
};

/// Ranks every query against all cache entries (not centroids).
std::vector<RankingResult> rank_queries(
    const std::vector<QueryEmbedding>& queries, const FeatureCache& cache);

inline constexpr int kCmcRanks[] = {1, 5, 10, 20};

struct CmcReport {
    double mean_ap = 0.0;
    std::map<int, double> rank_k;  // k in {1, 5, 10, 20}
    size_t num_queries = 0;        // queries actually evaluated
    size_t num_excluded = 0;       // class absent from the gallery
};

/// rank-k = fraction of queries with a correct class in the top k.
/// Per-query AP = mean over the ordered correct hits j = 1..M of
/// j / position_j. Queries whose class is absent from the gallery are
/// excluded and counted in num_excluded.
CmcReport cmc_evaluate(const std::vector<RankingResult>& rankings);

// ---- Detection metrics (COCO-style mAP / AP50 / AP75 / AR) ----

struct GtInstance {
    std::string image_id;
    std::string object_id;
    Box bbox;
    Rle mask;
};

struct DetInstance {
    std::string image_id;
    std::string object_id;
    double score = 0.0;
    Box bbox;
    Rle mask;
};

struct CocoDataset {
    std::vector<std::string> image_ids;
    std::vector<GtInstance> gt;
    std::vector<DetInstance> detections;
};

struct TaskMetrics {
    double map = 0.0;   // mean AP over IoU .50:.05:.95
    double ap50 = 0.0;
    double ap75 = 0.0;
    double ar = 0.0;    // mean recall over the same thresholds, 100 dets
};

struct DetectionReport {
    TaskMetrics bbox;
    TaskMetrics segm;
    size_t num_images = 0;
};

/// Builds evaluator input from annotated scenes and serialized detection
/// records. Records must reference scene image ids.
CocoDataset make_coco_input(const std::vector<SceneImage>& scenes,
                            const std::vector<DetectionRecord>& records);

/// Greedy per-class per-image matching in descending score order (each
/// ground truth matched at most once, equal-IoU ties to the later ground
/// truth), 101-point interpolated precision-recall, IoU thresholds
/// .50:.05:.95, up to 100 detections per image. Classes without ground
/// truth are skipped, so detections naming an unlisted class (including
/// UNKNOWN) are inert. Runs twice: box IoU and mask IoU.
DetectionReport coco_evaluate(const CocoDataset& data);

// ---- Rendering ----

std::string render_cmc_table(const CmcReport& report);
std::string render_detection_table(const DetectionReport& report);

nlohmann::ordered_json cmc_report_json(const CmcReport& report);
nlohmann::ordered_json detection_report_json(const DetectionReport& report);

}  // namespace galdet
