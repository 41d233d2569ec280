#include "galdet/segmenter.hpp"

#include <opencv2/dnn.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <mutex>

#include "galdet/rle.hpp"

namespace galdet {

std::vector<SegmentProposal> OracleSegmenter::segment(
    const SceneImage& image) const {
    std::vector<SegmentProposal> proposals;
    proposals.reserve(image.annotations.size());
    for (const InstanceAnnotation& annotation : image.annotations) {
        SegmentProposal p;
        p.mask = annotation.mask;
        p.bbox = tight_box(annotation.mask);
        p.confidence = 1.0f;
        proposals.push_back(std::move(p));
    }
    return proposals;
}

struct ModelSegmenter::Impl {
    cv::dnn::Net net;
    mutable std::mutex mutex;  // dnn graphs are not reentrant
};

ModelSegmenter::ModelSegmenter(const std::filesystem::path& model_path)
    : impl_(std::make_unique<Impl>()) {
    if (!std::filesystem::exists(model_path)) {
        throw Error("segmentation model not found: " + model_path.string());
    }
    try {
        impl_->net = cv::dnn::readNet(model_path.string());
    } catch (const cv::Exception& e) {
        throw Error("failed to load segmentation model " + model_path.string() +
                    ": " + e.what());
    }
    if (impl_->net.empty()) {
        throw Error("segmentation model is empty: " + model_path.string());
    }
}

ModelSegmenter::~ModelSegmenter() = default;

std::vector<SegmentProposal> ModelSegmenter::segment(
    const SceneImage& image) const {
    // Two-output instance segmentation convention: a 1x1xNx7 detection
    // tensor [batch, class, score, x1, y1, x2, y2] with normalized
    // coordinates, plus NxCxhxw mask prototypes.
    cv::Mat detections;
    cv::Mat masks;
    try {
        std::lock_guard<std::mutex> lock(impl_->mutex);
        const cv::Mat blob = cv::dnn::blobFromImage(image.pixels);
        impl_->net.setInput(blob);
        std::vector<cv::Mat> outs;
        impl_->net.forward(outs, std::vector<std::string>{
                                     "detection_out_final", "detection_masks"});
        detections = outs[0];
        masks = outs[1];
    } catch (const cv::Exception& e) {
        throw Error(std::string("segmentation inference failed: ") + e.what());
    }

    const int num = detections.size[2];
    const int width = image.pixels.cols;
    const int height = image.pixels.rows;
    detections = detections.reshape(1, num);

    std::vector<SegmentProposal> proposals;
    for (int i = 0; i < num; ++i) {
        const float score = detections.at<float>(i, 2);
        if (score <= 1e-3f) {
            continue;  // zero-padded output rows
        }
        const int class_id = static_cast<int>(detections.at<float>(i, 1));
        int x1 = static_cast<int>(detections.at<float>(i, 3) * width);
        int y1 = static_cast<int>(detections.at<float>(i, 4) * height);
        int x2 = static_cast<int>(detections.at<float>(i, 5) * width);
        int y2 = static_cast<int>(detections.at<float>(i, 6) * height);
        x1 = std::clamp(x1, 0, width - 1);
        y1 = std::clamp(y1, 0, height - 1);
        x2 = std::clamp(x2, 0, width - 1);
        y2 = std::clamp(y2, 0, height - 1);
        if (x2 <= x1 || y2 <= y1) {
            continue;
        }
        const cv::Rect box(x1, y1, x2 - x1 + 1, y2 - y1 + 1);

        cv::Mat prototype(masks.size[2], masks.size[3], CV_32F,
                          masks.ptr<float>(i, class_id));
        cv::Mat resized;
        cv::resize(prototype, resized, box.size());
        cv::Mat full = cv::Mat::zeros(height, width, CV_8U);
        cv::Mat binary;
        cv::compare(resized, 0.5, binary, cv::CMP_GT);
        binary.copyTo(full(box));
        if (cv::countNonZero(full) == 0) {
            continue;
        }

        SegmentProposal p;
        p.mask = full;
        p.bbox = tight_box(full);
        p.confidence = score;
        proposals.push_back(std::move(p));
    }
    return proposals;
}

std::vector<SegmentProposal> filter_proposals(
    std::vector<SegmentProposal> proposals, int min_area,
    double max_overlap_iou) {
    std::vector<SegmentProposal> sized;
    sized.reserve(proposals.size());
    for (SegmentProposal& p : proposals) {
        if (p.mask.empty()) {
            continue;
        }
        const int area = count_foreground(p.mask);
        if (area > 0 && area >= min_area) {
            sized.push_back(std::move(p));
        }
    }
    std::stable_sort(sized.begin(), sized.end(),
                     [](const SegmentProposal& a, const SegmentProposal& b) {
                         return a.confidence > b.confidence;
                     });

    std::vector<SegmentProposal> kept;
    for (SegmentProposal& candidate : sized) {
        bool suppressed = false;
        for (const SegmentProposal& survivor : kept) {
            if (mask_iou(candidate.mask, survivor.mask) > max_overlap_iou) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) {
            kept.push_back(std::move(candidate));
        }
    }
    return kept;
}

std::unique_ptr<Segmenter> make_segmenter(
    const std::string& kind, const std::filesystem::path& model_path) {
    if (kind == "oracle") {
        return std::make_unique<OracleSegmenter>();
    }
    if (kind == "model") {
        if (model_path.empty()) {
            throw Error("segmenter kind 'model' requires a model path");
        }
        return std::make_unique<ModelSegmenter>(model_path);
    }
    throw Error("unknown segmenter kind: " + kind);
}

}  // namespace galdet
