#pragma once

#include <opencv2/core.hpp>

#include <cstdint>
#include <vector>

#include "galdet/types.hpp"

namespace galdet {

/// Run-length encoded binary mask, column-major scan order with the
/// first count covering background (the COCO uncompressed convention,
/// so encoded masks interoperate with COCO-style tooling).
struct Rle {
    int height = 0;
    int width = 0;
    std::vector<uint32_t> counts;

    bool operator==(const Rle&) const = default;
};

Rle rle_encode(const cv::Mat& mask);
cv::Mat rle_decode(const Rle& rle);
uint64_t rle_area(const Rle& rle);

/// IoU of two encoded masks computed on the run lists directly.
/// Errors when dimensions differ or both masks are empty.
double rle_iou(const Rle& a, const Rle& b);

/// IoU of two dense 8UC1 masks of equal size. Both-empty is an error.
double mask_iou(const cv::Mat& a, const cv::Mat& b);

/// IoU of two pixel boxes; zero-area union is an error.
double box_iou(const Box& a, const Box& b);

}  // namespace galdet
