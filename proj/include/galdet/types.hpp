#pragma once

#include <opencv2/core.hpp>

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace galdet {

/// Base error for all toolkit failures. Messages carry enough context
/// (paths, ids, indices) to act on without a debugger.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised for invalid or inconsistent run configuration; the CLI maps it
/// to a distinct exit code.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Label assigned when the best gallery similarity falls below the
/// unknown threshold.
inline constexpr const char* kUnknownId = "UNKNOWN";

/// Axis-aligned pixel rectangle, [x, x+w) x [y, y+h).
struct Box {
    int x = 0;
    int y = 0;
    int w = 0;
    int h = 0;

    long long area() const { return static_cast<long long>(w) * h; }
    bool operator==(const Box&) const = default;
};

/// An object crop: pixels inside the source mask keep their values,
/// everything else is background (0,0,0). 8UC3, BGR channel order.
struct ImagePatch {
    cv::Mat pixels;
    std::optional<std::string> source_object_id;
    std::optional<std::string> source_image_id;
};

/// One ground-truth instance of a scene image. The mask is a full-size
/// 8UC1 raster (0 background, nonzero foreground); bbox is its tight
/// bounding box.
struct InstanceAnnotation {
    std::string object_id;
    Box bbox;
    cv::Mat mask;
};

struct SceneImage {
    std::string image_id;
    cv::Mat pixels;
    std::vector<InstanceAnnotation> annotations;
};

/// Class-agnostic instance mask proposal. Deliberately carries no class
/// information; classification happens downstream against the gallery.
struct SegmentProposal {
    cv::Mat mask;
    Box bbox;
    double confidence = 0.0;
};

struct Detection {
    SegmentProposal proposal;
    std::string matched_object_id;
    double similarity = 0.0;
    /// (similarity + 1) / 2 clipped to [0,1]; the ranking score used by
    /// detection metrics.
    double score = 0.0;
};

// Raster helpers. Masks are 8UC1; any nonzero pixel counts as foreground.

int count_foreground(const cv::Mat& mask);

/// Tight bounding box of the mask foreground. Errors on an empty mask.
Box tight_box(const cv::Mat& mask);

bool box_in_bounds(const Box& box, int width, int height);

/// Byte-wise equality of two rasters (type, size and content).
bool rasters_equal(const cv::Mat& a, const cv::Mat& b);

double score_from_similarity(double similarity);

}  // namespace galdet
