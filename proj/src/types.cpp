#include "galdet/types.hpp"

#include <algorithm>

namespace galdet {

int count_foreground(const cv::Mat& mask) {
    if (mask.empty()) {
        return 0;
    }
    if (mask.type() != CV_8UC1) {
        throw Error("count_foreground: mask must be 8UC1");
    }
    return cv::countNonZero(mask);
}

Box tight_box(const cv::Mat& mask) {
    if (mask.empty() || mask.type() != CV_8UC1) {
        throw Error("tight_box: mask must be a non-empty 8UC1 raster");
    }
    int min_x = mask.cols;
    int min_y = mask.rows;
    int max_x = -1;
    int max_y = -1;
    for (int y = 0; y < mask.rows; ++y) {
        const uchar* row = mask.ptr<uchar>(y);
        for (int x = 0; x < mask.cols; ++x) {
            if (row[x] != 0) {
                min_x = std::min(min_x, x);
                min_y = std::min(min_y, y);
                max_x = std::max(max_x, x);
                max_y = std::max(max_y, y);
            }
        }
    }
    if (max_x < 0) {
        throw Error("tight_box: mask has no foreground pixels");
    }
    return Box{min_x, min_y, max_x - min_x + 1, max_y - min_y + 1};
}

bool box_in_bounds(const Box& box, int width, int height) {
    return box.w > 0 && box.h > 0 && box.x >= 0 && box.y >= 0 &&
           box.x + box.w <= width && box.y + box.h <= height;
}

bool rasters_equal(const cv::Mat& a, const cv::Mat& b) {
    if (a.type() != b.type() || a.rows != b.rows || a.cols != b.cols) {
        return false;
    }
    if (a.empty()) {
        return true;
    }
    const size_t row_bytes = a.cols * a.elemSize();
    for (int y = 0; y < a.rows; ++y) {
        if (std::memcmp(a.ptr(y), b.ptr(y), row_bytes) != 0) {
            return false;
        }
    }
    return true;
}

double score_from_similarity(double similarity) {
    const double score = (similarity + 1.0) / 2.0;
    return std::clamp(score, 0.0, 1.0);
}

}  // namespace galdet
