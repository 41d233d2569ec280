#pragma once

#include <opencv2/core.hpp>

#include <string>
#include <vector>

#include "galdet/types.hpp"

namespace galdet {

/// Stable id-derived display color (BGR). UNKNOWN renders gray.
cv::Scalar object_color(const std::string& object_id);

/// Scene image with each detection's mask tinted and box and label drawn
/// in its class color.
cv::Mat render_overlay(const SceneImage& image,
                       const std::vector<Detection>& detections);

/// Image id mapped to a safe file name ('/' becomes '_').
std::string overlay_filename(const std::string& image_id);

}  // namespace galdet
