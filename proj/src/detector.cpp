#include "galdet/detector.hpp"

#include <algorithm>
#include <fstream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "galdet/ingest.hpp"

namespace galdet {

MatchStrategy::Kind parse_strategy_kind(const std::string& name) {
    if (name == "closest") {
        return MatchStrategy::Kind::kClosest;
    }
    if (name == "centroid") {
        return MatchStrategy::Kind::kCentroid;
    }
    throw Error("unknown match strategy: " + name +
                " (expected closest or centroid)");
}

const char* strategy_kind_name(MatchStrategy::Kind kind) {
    return kind == MatchStrategy::Kind::kClosest ? "closest" : "centroid";
}

MatchResult match_patch(const Eigen::VectorXf& embedding,
                        const FeatureCache& cache,
                        const MatchStrategy& strategy) {
    if (cache.entries.empty()) {
        throw Error("match_patch: feature cache is empty");
    }
    if (embedding.size() != cache.dim) {
        throw Error("match_patch: embedding dimension " +
                    std::to_string(embedding.size()) + " != cache dimension " +
                    std::to_string(cache.dim));
    }

    MatchResult best;
    bool first = true;
    if (strategy.kind == MatchStrategy::Kind::kClosest) {
        // Entries are ordered by (object_id, augmentation_index), so a
        // strictly-greater scan lands ties on the documented winner.
        for (const CacheEntry& entry : cache.entries) {
            const double sim = similarity(embedding, entry.embedding);
            if (first || sim > best.similarity) {
                best.object_id = entry.object_id;
                best.similarity = sim;
                first = false;
            }
        }
    } else {
        for (const auto& [object_id, centroid] : cache.centroids) {
            const double sim = similarity(embedding, centroid);
            if (first || sim > best.similarity) {
                best.object_id = object_id;
                best.similarity = sim;
                first = false;
            }
        }
    }

    if (!strategy.closed_set && best.similarity < strategy.unknown_threshold) {
        best.object_id = kUnknownId;
    }
    return best;
}

std::vector<Detection> detect(const SceneImage& image,
                              const GallerySet& gallery,
                              const FeatureCache& cache,
                              const Segmenter& segmenter,
                              const Embedder& embedder,
                              const MatchStrategy& strategy,
                              const DetectOptions& options) {
    if (gallery.empty()) {
        throw Error("detect: gallery is empty");
    }
    if (!cache_is_current(cache, gallery, embedder)) {
        throw Error(
            "detect: feature cache is stale (gallery content or embedder "
            "version changed); reconcile with ensure_cache first");
    }

    std::vector<SegmentProposal> proposals = filter_proposals(
        segmenter.segment(image), options.min_area, options.max_overlap_iou);

    std::vector<Detection> detections;
    detections.reserve(proposals.size());
    for (SegmentProposal& proposal : proposals) {
        InstanceAnnotation crop_request;
        crop_request.bbox = proposal.bbox;
        crop_request.mask = proposal.mask;
        const ImagePatch patch = extract_patch(image, crop_request);

        Detection det;
        const MatchResult match =
            match_patch(embedder.embed(patch), cache, strategy);
        det.proposal = std::move(proposal);
        det.matched_object_id = match.object_id;
        det.similarity = match.similarity;
        det.score = score_from_similarity(match.similarity);
        detections.push_back(std::move(det));
    }

    std::stable_sort(detections.begin(), detections.end(),
                     [](const Detection& a, const Detection& b) {
                         return a.score > b.score;
                     });
    return detections;
}

void append_detection_records(std::ostream& out, const std::string& image_id,
                              const std::vector<Detection>& detections) {
    for (const Detection& det : detections) {
        const Rle rle = rle_encode(det.proposal.mask);
        nlohmann::ordered_json line = {
            {"image_id", image_id},
            {"object_id", det.matched_object_id},
            {"score", det.score},
            {"bbox", {det.proposal.bbox.x, det.proposal.bbox.y,
                      det.proposal.bbox.w, det.proposal.bbox.h}},
            {"mask", {{"size", {rle.height, rle.width}},
                      {"counts", rle.counts}}},
        };
        out << line.dump() << '\n';
    }
}

std::vector<DetectionRecord> read_detection_records(
    const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error("detection records not found: " + path.string());
    }
    std::vector<DetectionRecord> records;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
            DetectionRecord rec;
            rec.image_id = j.at("image_id").get<std::string>();
            rec.object_id = j.at("object_id").get<std::string>();
            rec.score = j.at("score").get<double>();
            const auto& bbox = j.at("bbox");
            if (!bbox.is_array() || bbox.size() != 4) {
                throw Error("bbox must be [x, y, w, h]");
            }
            rec.bbox = Box{bbox[0].get<int>(), bbox[1].get<int>(),
                           bbox[2].get<int>(), bbox[3].get<int>()};
            const auto& mask = j.at("mask");
            const auto& size = mask.at("size");
            rec.mask.height = size.at(0).get<int>();
            rec.mask.width = size.at(1).get<int>();
            rec.mask.counts =
                mask.at("counts").get<std::vector<uint32_t>>();
            records.push_back(std::move(rec));
        } catch (const std::exception& e) {
            throw Error(path.string() + ":" + std::to_string(line_no) +
                        ": bad detection record: " + e.what());
        }
    }
    return records;
}

}  // namespace galdet
