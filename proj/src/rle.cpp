#include "galdet/rle.hpp"

#include <algorithm>

namespace galdet {

Rle rle_encode(const cv::Mat& mask) {
    if (mask.empty() || mask.type() != CV_8UC1) {
        throw Error("rle_encode: mask must be a non-empty 8UC1 raster");
    }
    Rle rle;
    rle.height = mask.rows;
    rle.width = mask.cols;

    bool current = false;  // runs start with background
    uint32_t run = 0;
    for (int x = 0; x < mask.cols; ++x) {
        for (int y = 0; y < mask.rows; ++y) {
            const bool fg = mask.at<uchar>(y, x) != 0;
            if (fg == current) {
                ++run;
            } else {
                rle.counts.push_back(run);
                current = fg;
                run = 1;
            }
        }
    }
    rle.counts.push_back(run);
    return rle;
}

cv::Mat rle_decode(const Rle& rle) {
    if (rle.height <= 0 || rle.width <= 0) {
        throw Error("rle_decode: invalid dimensions");
    }
    uint64_t total = 0;
    for (uint32_t c : rle.counts) {
        total += c;
    }
    const uint64_t expected =
        static_cast<uint64_t>(rle.height) * static_cast<uint64_t>(rle.width);
    if (total != expected) {
        throw Error("rle_decode: counts sum " + std::to_string(total) +
                    " does not match raster size " + std::to_string(expected));
    }
    cv::Mat mask = cv::Mat::zeros(rle.height, rle.width, CV_8UC1);
    uint64_t pos = 0;
    for (size_t i = 0; i < rle.counts.size(); ++i) {
        const bool fg = (i % 2) == 1;
        for (uint32_t k = 0; k < rle.counts[i]; ++k, ++pos) {
            if (fg) {
                const int x = static_cast<int>(pos / rle.height);
                const int y = static_cast<int>(pos % rle.height);
                mask.at<uchar>(y, x) = 255;
            }
        }
    }
    return mask;
}

uint64_t rle_area(const Rle& rle) {
    uint64_t area = 0;
    for (size_t i = 1; i < rle.counts.size(); i += 2) {
        area += rle.counts[i];
    }
    return area;
}

double rle_iou(const Rle& a, const Rle& b) {
    if (a.height != b.height || a.width != b.width) {
        throw Error("rle_iou: mask dimensions differ");
    }
    // Merge the two run lists; add overlap length where both runs are
    // foreground (odd run index).
    uint64_t inter = 0;
    size_t ia = 0;
    size_t ib = 0;
    uint64_t a_start = 0;
    uint64_t b_start = 0;
    while (ia < a.counts.size() && ib < b.counts.size()) {
        const uint64_t a_end = a_start + a.counts[ia];
        const uint64_t b_end = b_start + b.counts[ib];
        const uint64_t lo = std::max(a_start, b_start);
        const uint64_t hi = std::min(a_end, b_end);
        if (hi > lo && (ia % 2) == 1 && (ib % 2) == 1) {
            inter += hi - lo;
        }
        if (a_end <= b_end) {
            a_start = a_end;
            ++ia;
        }
        if (b_end <= a_end) {
            b_start = b_end;
            ++ib;
        }
    }
    const uint64_t uni = rle_area(a) + rle_area(b) - inter;
    if (uni == 0) {
        throw Error("rle_iou: both masks are empty");
    }
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double mask_iou(const cv::Mat& a, const cv::Mat& b) {
    if (a.type() != CV_8UC1 || b.type() != CV_8UC1) {
        throw Error("mask_iou: masks must be 8UC1");
    }
    if (a.rows != b.rows || a.cols != b.cols) {
        throw Error("mask_iou: mask dimensions differ");
    }
    uint64_t inter = 0;
    uint64_t uni = 0;
    for (int y = 0; y < a.rows; ++y) {
        const uchar* ra = a.ptr<uchar>(y);
        const uchar* rb = b.ptr<uchar>(y);
        for (int x = 0; x < a.cols; ++x) {
            const bool fa = ra[x] != 0;
            const bool fb = rb[x] != 0;
            inter += fa && fb;
            uni += fa || fb;
        }
    }
    if (uni == 0) {
        throw Error("mask_iou: both masks are empty");
    }
    return static_cast<double>(inter) / static_cast<double>(uni);
}

double box_iou(const Box& a, const Box& b) {
    const long long ix = std::max(
        0LL, static_cast<long long>(std::min(a.x + a.w, b.x + b.w)) -
                 std::max(a.x, b.x));
    const long long iy = std::max(
        0LL, static_cast<long long>(std::min(a.y + a.h, b.y + b.h)) -
                 std::max(a.y, b.y));
    const long long inter = ix * iy;
    const long long uni = a.area() + b.area() - inter;
    if (uni <= 0) {
        throw Error("box_iou: union is empty");
    }
    return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace galdet
