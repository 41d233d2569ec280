#include "galdet/overlay.hpp"

#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cstdio>

#include "galdet/hash.hpp"

namespace galdet {

cv::Scalar object_color(const std::string& object_id) {
    if (object_id == kUnknownId) {
        return cv::Scalar(128, 128, 128);
    }
    // Hash the id onto the hue circle; saturation/value stay high so
    // neighboring ids remain distinguishable on dark scenes.
    const std::string digest = sha256_hex(object_id);
    const int hue = std::stoi(digest.substr(0, 4), nullptr, 16) % 180;
    cv::Mat hsv(1, 1, CV_8UC3, cv::Scalar(hue, 200, 255));
    cv::Mat bgr;
    cv::cvtColor(hsv, bgr, cv::COLOR_HSV2BGR);
    const cv::Vec3b c = bgr.at<cv::Vec3b>(0, 0);
    return cv::Scalar(c[0], c[1], c[2]);
}

cv::Mat render_overlay(const SceneImage& image,
                       const std::vector<Detection>& detections) {
    cv::Mat canvas = image.pixels.clone();
    for (const Detection& det : detections) {
        const cv::Scalar color = object_color(det.matched_object_id);
        cv::Mat tint(canvas.size(), canvas.type(), color);
        cv::Mat blended;
        cv::addWeighted(canvas, 0.55, tint, 0.45, 0.0, blended);
        blended.copyTo(canvas, det.proposal.mask);

        const Box& b = det.proposal.bbox;
        cv::rectangle(canvas, cv::Rect(b.x, b.y, b.w, b.h), color, 2);

        char label[128];
        std::snprintf(label, sizeof(label), "%s %.2f",
                      det.matched_object_id.c_str(), det.score);
        const int baseline_y = std::max(12, b.y - 4);
        cv::putText(canvas, label, cv::Point(b.x, baseline_y),
                    cv::FONT_HERSHEY_SIMPLEX, 0.45, cv::Scalar(0, 0, 0), 3,
                    cv::LINE_AA);
        cv::putText(canvas, label, cv::Point(b.x, baseline_y),
                    cv::FONT_HERSHEY_SIMPLEX, 0.45, color, 1, cv::LINE_AA);
    }
    return canvas;
}

std::string overlay_filename(const std::string& image_id) {
    std::string name = image_id;
    std::replace(name.begin(), name.end(), '/', '_');
    return name + "_overlay.png";
}

}  // namespace galdet
