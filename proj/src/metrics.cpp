#include "galdet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <sstream>

#include "galdet/embedder.hpp"

namespace galdet {

std::vector<RankingResult> rank_queries(
    const std::vector<QueryEmbedding>& queries, const FeatureCache& cache) {
    if (queries.empty()) {
        throw Error("rank_queries: empty query set");
    }
    if (cache.entries.empty()) {
        throw Error("rank_queries: feature cache is empty");
    }

    std::vector<RankingResult> results;
    results.reserve(queries.size());
    for (const QueryEmbedding& query : queries) {
        if (query.embedding.size() != cache.dim) {
            throw Error("rank_queries: query '" + query.query_id +
                        "' dimension " +
                        std::to_string(query.embedding.size()) +
                        " != cache dimension " + std::to_string(cache.dim));
        }
        RankingResult result;
        result.query_id = query.query_id;
        result.query_class = query.query_class;
        result.ranking.reserve(cache.entries.size());
        for (const CacheEntry& entry : cache.entries) {
            result.ranking.push_back(
                RankedEntry{entry.object_id, entry.augmentation_index,
                            similarity(query.embedding, entry.embedding)});
        }
        std::stable_sort(result.ranking.begin(), result.ranking.end(),
                         [](const RankedEntry& a, const RankedEntry& b) {
                             return a.similarity > b.similarity;
                         });
        results.push_back(std::move(result));
    }
    return results;
}

CmcReport cmc_evaluate(const std::vector<RankingResult>& rankings) {
    if (rankings.empty()) {
        throw Error("cmc_evaluate: no rankings given");
    }

    CmcReport report;
    for (const int k : kCmcRanks) {
        report.rank_k[k] = 0.0;
    }

    double ap_sum = 0.0;
    for (const RankingResult& result : rankings) {
        if (result.ranking.empty()) {
            throw Error("cmc_evaluate: query '" + result.query_id +
                        "' has an empty ranking");
        }
        size_t hits = 0;
        double ap = 0.0;
        size_t first_correct = 0;  // 1-based; 0 = none
        for (size_t pos = 0; pos < result.ranking.size(); ++pos) {
            if (result.ranking[pos].gallery_class == result.query_class) {
                ++hits;
                ap += static_cast<double>(hits) / static_cast<double>(pos + 1);
                if (first_correct == 0) {
                    first_correct = pos + 1;
                }
            }
        }
        if (hits == 0) {
            ++report.num_excluded;
            continue;
        }
        ap_sum += ap / static_cast<double>(hits);
        ++report.num_queries;
        for (const int k : kCmcRanks) {
            if (first_correct <= static_cast<size_t>(k)) {
                report.rank_k[k] += 1.0;
            }
        }
    }

    if (report.num_queries == 0) {
        throw Error(
            "cmc_evaluate: no evaluable queries (every query's class is "
            "absent from the gallery)");
    }
    const double n = static_cast<double>(report.num_queries);
    report.mean_ap = ap_sum / n;
    for (const int k : kCmcRanks) {
        report.rank_k[k] /= n;
    }
    return report;
}

namespace {

constexpr int kNumIouThresholds = 10;
constexpr int kNumRecallPoints = 101;
constexpr size_t kMaxDetectionsPerImage = 100;

// IoU grid .50:.05:.95 built the way np.linspace does: the step
// (0.95-0.5)/9 rounds to 0.049999999999999996, so naive 0.5 + 0.05*i
// drifts one ulp at i=7 and i=8 and disagrees with pycocotools.
double iou_threshold(int index) {
    if (index == kNumIouThresholds - 1) return 0.95;
    return 0.5 + index * ((0.95 - 0.5) / 9.0);
}

// Recall grid 0:.01:1, same construction. i*0.01 differs from i/100.0
// at ten indices (0.35, 0.41, ...), which shifts interpolation when a
// recall value lands exactly on the boundary.
double recall_point(int index) {
    if (index == kNumRecallPoints - 1) return 1.0;
    return index * 0.01;
}

struct ClassEval {
    bool has_gt = false;
    double ap[kNumIouThresholds] = {};
    double recall[kNumIouThresholds] = {};
};

/// Evaluates one class across all images for one IoU flavor. iou_fn
/// returns the detection-vs-gt IoU matrix for one image.
template <typename IouFn>
ClassEval evaluate_class(
    const std::vector<std::string>& image_ids,
    const std::map<std::string, std::vector<const GtInstance*>>& gt_by_image,
    const std::map<std::string, std::vector<const DetInstance*>>& det_by_image,
    IouFn&& iou_fn) {
    struct ScoredMatch {
        double score = 0.0;
        bool matched[kNumIouThresholds] = {};
    };
    std::vector<ScoredMatch> all_dets;
    size_t num_gt = 0;

    for (const std::string& image_id : image_ids) {
        const auto git = gt_by_image.find(image_id);
        const auto dit = det_by_image.find(image_id);
        const std::vector<const GtInstance*> no_gt;
        const std::vector<const DetInstance*> no_det;
        const auto& gts = git != gt_by_image.end() ? git->second : no_gt;
        std::vector<const DetInstance*> dets =
            dit != det_by_image.end() ? dit->second : no_det;
        num_gt += gts.size();
        if (dets.empty()) {
            continue;
        }

        // Descending score, stable over input order, capped per image.
        std::stable_sort(dets.begin(), dets.end(),
                         [](const DetInstance* a, const DetInstance* b) {
                             return a->score > b->score;
                         });
        if (dets.size() > kMaxDetectionsPerImage) {
            dets.resize(kMaxDetectionsPerImage);
        }

        std::vector<std::vector<double>> ious(dets.size());
        for (size_t d = 0; d < dets.size(); ++d) {
            ious[d].resize(gts.size());
            for (size_t g = 0; g < gts.size(); ++g) {
                ious[d][g] = iou_fn(*dets[d], *gts[g]);
            }
        }

        std::vector<ScoredMatch> image_dets(dets.size());
        for (size_t d = 0; d < dets.size(); ++d) {
            image_dets[d].score = dets[d]->score;
        }
        for (int t = 0; t < kNumIouThresholds; ++t) {
            std::vector<bool> gt_used(gts.size(), false);
            for (size_t d = 0; d < dets.size(); ++d) {
                // Best unmatched gt at or above the threshold; an exact
                // IoU tie moves the match to the later gt.
                double best = std::min(iou_threshold(t), 1.0 - 1e-10);
                ptrdiff_t match = -1;
                for (size_t g = 0; g < gts.size(); ++g) {
                    if (gt_used[g] || ious[d][g] < best) {
                        continue;
                    }
                    best = ious[d][g];
                    match = static_cast<ptrdiff_t>(g);
                }
                if (match >= 0) {
                    gt_used[static_cast<size_t>(match)] = true;
                    image_dets[d].matched[t] = true;
                }
            }
        }
        all_dets.insert(all_dets.end(), image_dets.begin(), image_dets.end());
    }

    ClassEval eval;
    eval.has_gt = num_gt > 0;
    if (!eval.has_gt) {
        return eval;
    }
    if (all_dets.empty()) {
        return eval;  // zero ap / recall
    }

    std::vector<size_t> order(all_dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return all_dets[a].score > all_dets[b].score;
    });

    for (int t = 0; t < kNumIouThresholds; ++t) {
        std::vector<double> precision(order.size());
        std::vector<double> recall(order.size());
        size_t tp = 0;
        size_t fp = 0;
        for (size_t i = 0; i < order.size(); ++i) {
            if (all_dets[order[i]].matched[t]) {
                ++tp;
            } else {
                ++fp;
            }
            precision[i] = static_cast<double>(tp) / static_cast<double>(tp + fp);
            recall[i] = static_cast<double>(tp) / static_cast<double>(num_gt);
        }
        eval.recall[t] = recall.back();

        // Precision envelope: best precision at this recall or beyond.
        for (size_t i = precision.size() - 1; i > 0; --i) {
            precision[i - 1] = std::max(precision[i - 1], precision[i]);
        }

        double ap_sum = 0.0;
        for (int r = 0; r < kNumRecallPoints; ++r) {
            const double want = recall_point(r);
            const auto it =
                std::lower_bound(recall.begin(), recall.end(), want);
            if (it != recall.end()) {
                ap_sum += precision[static_cast<size_t>(
                    std::distance(recall.begin(), it))];
            }
        }
        eval.ap[t] = ap_sum / kNumRecallPoints;
    }
    return eval;
}

template <typename IouFn>
TaskMetrics evaluate_task(const CocoDataset& data, IouFn&& iou_fn) {
    std::set<std::string> class_ids;
    for (const GtInstance& gt : data.gt) {
        class_ids.insert(gt.object_id);
    }
    for (const DetInstance& det : data.detections) {
        class_ids.insert(det.object_id);
    }

    TaskMetrics metrics;
    double map_sum = 0.0;
    double ap50_sum = 0.0;
    double ap75_sum = 0.0;
    double ar_sum = 0.0;
    size_t valid_classes = 0;

    for (const std::string& class_id : class_ids) {
        std::map<std::string, std::vector<const GtInstance*>> gt_by_image;
        for (const GtInstance& gt : data.gt) {
            if (gt.object_id == class_id) {
                gt_by_image[gt.image_id].push_back(&gt);
            }
        }
        std::map<std::string, std::vector<const DetInstance*>> det_by_image;
        for (const DetInstance& det : data.detections) {
            if (det.object_id == class_id) {
                det_by_image[det.image_id].push_back(&det);
            }
        }
        const ClassEval eval = evaluate_class(data.image_ids, gt_by_image,
                                              det_by_image, iou_fn);
        if (!eval.has_gt) {
            continue;  // class never appears in ground truth
        }
        ++valid_classes;
        double class_ap = 0.0;
        double class_recall = 0.0;
        for (int t = 0; t < kNumIouThresholds; ++t) {
            class_ap += eval.ap[t];
            class_recall += eval.recall[t];
        }
        map_sum += class_ap / kNumIouThresholds;
        ar_sum += class_recall / kNumIouThresholds;
        ap50_sum += eval.ap[0];
        ap75_sum += eval.ap[5];
    }

    if (valid_classes > 0) {
        const double n = static_cast<double>(valid_classes);
        metrics.map = map_sum / n;
        metrics.ap50 = ap50_sum / n;
        metrics.ap75 = ap75_sum / n;
        metrics.ar = ar_sum / n;
    }
    return metrics;
}

}  // namespace

CocoDataset make_coco_input(const std::vector<SceneImage>& scenes,
                            const std::vector<DetectionRecord>& records) {
    CocoDataset data;
    std::set<std::string> known_images;
    for (const SceneImage& scene : scenes) {
        data.image_ids.push_back(scene.image_id);
        known_images.insert(scene.image_id);
        for (const InstanceAnnotation& annotation : scene.annotations) {
            GtInstance gt;
            gt.image_id = scene.image_id;
            gt.object_id = annotation.object_id;
            gt.bbox = annotation.bbox;
            gt.mask = rle_encode(annotation.mask);
            data.gt.push_back(std::move(gt));
        }
    }
    for (const DetectionRecord& record : records) {
        if (known_images.count(record.image_id) == 0) {
            throw Error("detection references unknown image_id: " +
                        record.image_id);
        }
        DetInstance det;
        det.image_id = record.image_id;
        det.object_id = record.object_id;
        det.score = record.score;
        det.bbox = record.bbox;
        det.mask = record.mask;
        data.detections.push_back(std::move(det));
    }
    return data;
}

DetectionReport coco_evaluate(const CocoDataset& data) {
    DetectionReport report;
    report.num_images = data.image_ids.size();
    report.bbox = evaluate_task(
        data, [](const DetInstance& det, const GtInstance& gt) {
            const long long inter_area = [&]() {
                const Box& a = det.bbox;
                const Box& b = gt.bbox;
                const int x1 = std::max(a.x, b.x);
                const int y1 = std::max(a.y, b.y);
                const int x2 = std::min(a.x + a.w, b.x + b.w);
                const int y2 = std::min(a.y + a.h, b.y + b.h);
                if (x2 <= x1 || y2 <= y1) {
                    return 0LL;
                }
                return static_cast<long long>(x2 - x1) * (y2 - y1);
            }();
            const long long uni =
                det.bbox.area() + gt.bbox.area() - inter_area;
            return uni > 0 ? static_cast<double>(inter_area) /
                                 static_cast<double>(uni)
                           : 0.0;
        });
    report.segm = evaluate_task(
        data, [](const DetInstance& det, const GtInstance& gt) {
            if (rle_area(det.mask) == 0 && rle_area(gt.mask) == 0) {
                return 0.0;
            }
            return rle_iou(det.mask, gt.mask);
        });
    return report;
}

std::string render_cmc_table(const CmcReport& report) {
    char buf[256];
    std::string out;
    out += "  mAP     R1     R5    R10    R20   queries\n";
    std::snprintf(buf, sizeof(buf), "%5.1f  %5.1f  %5.1f  %5.1f  %5.1f  %8zu\n",
                  report.mean_ap * 100.0, report.rank_k.at(1) * 100.0,
                  report.rank_k.at(5) * 100.0, report.rank_k.at(10) * 100.0,
                  report.rank_k.at(20) * 100.0, report.num_queries);
    out += buf;
    if (report.num_excluded > 0) {
        std::snprintf(buf, sizeof(buf),
                      "warning: %zu queries excluded (class not in gallery)\n",
                      report.num_excluded);
        out += buf;
    }
    return out;
}

std::string render_detection_table(const DetectionReport& report) {
    char buf[256];
    std::string out;
    out += "task    mAP   AP50   AP75     AR\n";
    std::snprintf(buf, sizeof(buf), "bbox  %5.1f  %5.1f  %5.1f  %5.1f\n",
                  report.bbox.map * 100.0, report.bbox.ap50 * 100.0,
                  report.bbox.ap75 * 100.0, report.bbox.ar * 100.0);
    out += buf;
    std::snprintf(buf, sizeof(buf), "segm  %5.1f  %5.1f  %5.1f  %5.1f\n",
                  report.segm.map * 100.0, report.segm.ap50 * 100.0,
                  report.segm.ap75 * 100.0, report.segm.ar * 100.0);
    out += buf;
    std::snprintf(buf, sizeof(buf), "images: %zu\n", report.num_images);
    out += buf;
    return out;
}

nlohmann::ordered_json cmc_report_json(const CmcReport& report) {
    nlohmann::ordered_json j;
    j["mAP"] = report.mean_ap;
    nlohmann::ordered_json ranks;
    for (const int k : kCmcRanks) {
        ranks["R" + std::to_string(k)] = report.rank_k.at(k);
    }
    j["cmc"] = ranks;
    j["num_queries"] = report.num_queries;
    j["num_excluded"] = report.num_excluded;
    return j;
}

nlohmann::ordered_json detection_report_json(const DetectionReport& report) {
    const auto task = [](const TaskMetrics& m) {
        nlohmann::ordered_json j;
        j["mAP"] = m.map;
        j["AP50"] = m.ap50;
        j["AP75"] = m.ap75;
        j["AR"] = m.ar;
        return j;
    };
    nlohmann::ordered_json j;
    j["bbox"] = task(report.bbox);
    j["segm"] = task(report.segm);
    j["num_images"] = report.num_images;
    return j;
}

}  // namespace galdet
