#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "galdet/gallery.hpp"
#include "galdet/types.hpp"

namespace galdet {

/// Parses one BOP-style scene directory: per-frame ground-truth instance
/// records plus rgb/ and mask_visib/ image files. Frames come back sorted
/// by frame number; image ids are "<scene_name>/<frame>". Instances whose
/// visible mask has no foreground (fully occluded) are dropped.
std::vector<SceneImage> parse_bop_scene(const std::filesystem::path& scene_dir);

/// Crops the annotation's bbox out of the image and blanks everything
/// outside the mask to (0,0,0).
ImagePatch extract_patch(const SceneImage& image,
                         const InstanceAnnotation& annotation);

/// Class-keyed patches pooled across scenes.
using ClassDataset = std::map<std::string, std::vector<ImagePatch>>;

ClassDataset build_classification_dataset(const std::vector<SceneImage>& scenes);

/// Loads root/<object_id>/<image>.(png|jpg|jpeg|bmp), one object per
/// sub-directory, images in lexicographic filename order.
GallerySet parse_gallery_folder(const std::filesystem::path& root);

/// Writes out_dir/<object_id>/<n>.png for every patch; returns the number
/// of files written.
size_t export_patches(const ClassDataset& dataset,
                      const std::filesystem::path& out_dir);

}  // namespace galdet
