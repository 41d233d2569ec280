#pragma once

// Synthetic scene and gallery fixtures shared by the unit and acceptance
// tests: brightly colored shapes whose correct classification is known
// by construction, plus writers that lay them out on disk in the formats
// the ingest module consumes.

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <unistd.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "galdet/gallery.hpp"
#include "galdet/rng.hpp"
#include "galdet/types.hpp"

namespace galdet::fixtures {

struct ShapeSpec {
    std::string object_id;
    cv::Scalar color;  // BGR, every channel >= 40 so foreground is never black
    int kind = 0;      // 0 rect, 1 circle, 2 triangle, 3 ellipse, 4 diamond
};

/// Up to 8 visually distinct object classes. Ids are numeric strings so
/// the same fixtures round-trip through the BOP layout (integer ids).
inline std::vector<ShapeSpec> toy_objects(int count) {
    static const std::vector<ShapeSpec> all = {
        {"1", cv::Scalar(40, 40, 230), 0},    // red rectangle
        {"2", cv::Scalar(60, 200, 60), 1},    // green circle
        {"3", cv::Scalar(230, 90, 40), 2},    // blue triangle
        {"4", cv::Scalar(40, 220, 230), 3},   // yellow ellipse
        {"5", cv::Scalar(230, 60, 230), 4},   // magenta diamond
        {"6", cv::Scalar(230, 220, 80), 0},   // cyan rectangle
        {"7", cv::Scalar(40, 130, 240), 1},   // orange circle
        {"8", cv::Scalar(180, 90, 160), 2},   // purple triangle
    };
    return {all.begin(), all.begin() + std::min<size_t>(count, all.size())};
}

/// Draws the shape filled into an 8UC3 canvas; returns its binary mask.
inline cv::Mat draw_shape(cv::Mat& canvas, const ShapeSpec& spec, int cx,
                          int cy, int half) {
    cv::Mat mask = cv::Mat::zeros(canvas.size(), CV_8U);
    switch (spec.kind) {
        case 0:
            cv::rectangle(mask, cv::Point(cx - half, cy - half * 2 / 3),
                          cv::Point(cx + half, cy + half * 2 / 3), 255,
                          cv::FILLED);
            break;
        case 1:
            cv::circle(mask, cv::Point(cx, cy), half, 255, cv::FILLED);
            break;
        case 2: {
            const std::vector<cv::Point> pts = {{cx, cy - half},
                                                {cx - half, cy + half},
                                                {cx + half, cy + half}};
            cv::fillConvexPoly(mask, pts, 255);
            break;
        }
        case 3:
            cv::ellipse(mask, cv::Point(cx, cy), cv::Size(half, half / 2), 0,
                        0, 360, 255, cv::FILLED);
            break;
        default: {
            const std::vector<cv::Point> pts = {{cx, cy - half},
                                                {cx + half, cy},
                                                {cx, cy + half},
                                                {cx - half, cy}};
            cv::fillConvexPoly(mask, pts, 255);
            break;
        }
    }
    canvas.setTo(spec.color, mask);
    return mask;
}

/// Isolated object image: the shape on a black background with a small
/// margin, the way gallery exemplars are photographed.
inline ImagePatch make_shape_patch(const ShapeSpec& spec, int half,
                                   int margin = 4) {
    const int edge = 2 * (half + margin);
    ImagePatch patch;
    patch.pixels = cv::Mat::zeros(edge, edge, CV_8UC3);
    draw_shape(patch.pixels, spec, edge / 2, edge / 2, half);
    patch.source_object_id = spec.object_id;
    return patch;
}

/// A scene image with the listed shapes placed on a 4x3 cell grid so
/// instances never overlap. placements: (object index, cell index, half
/// size <= 55). Canvas 640x480, dark gray background.
inline SceneImage make_toy_scene(const std::string& image_id,
                                 const std::vector<ShapeSpec>& objects,
                                 const std::vector<std::array<int, 3>>& placements) {
    SceneImage scene;
    scene.image_id = image_id;
    scene.pixels = cv::Mat(480, 640, CV_8UC3, cv::Scalar(40, 40, 40));
    for (const auto& [obj, cell, half] : placements) {
        const int cx = (cell % 4) * 160 + 80;
        const int cy = (cell / 4) * 160 + 80;
        InstanceAnnotation annotation;
        annotation.object_id = objects[obj].object_id;
        annotation.mask = draw_shape(scene.pixels, objects[obj], cx, cy, half);
        annotation.bbox = tight_box(annotation.mask);
        scene.annotations.push_back(std::move(annotation));
    }
    return scene;
}

/// num_scenes scenes of 3..6 random non-overlapping instances each,
/// covering every object class at least once across the set.
inline std::vector<SceneImage> make_toy_dataset(
    const std::vector<ShapeSpec>& objects, int num_scenes, uint64_t seed) {
    Rng rng(seed);
    std::vector<SceneImage> scenes;
    for (int s = 0; s < num_scenes; ++s) {
        const int count = 3 + static_cast<int>(rng.bounded(4));
        std::vector<int> cells(12);
        for (int i = 0; i < 12; ++i) {
            cells[i] = i;
        }
        // partial shuffle for distinct cells
        for (int i = 0; i < count; ++i) {
            const int j = i + static_cast<int>(rng.bounded(12 - i));
            std::swap(cells[i], cells[j]);
        }
        std::vector<std::array<int, 3>> placements;
        for (int i = 0; i < count; ++i) {
            // rotate through classes so each appears regularly
            const int obj = (s + i * 3) % static_cast<int>(objects.size());
            const int half = 30 + static_cast<int>(rng.bounded(26));
            placements.push_back({obj, cells[i], half});
        }
        scenes.push_back(
            make_toy_scene("scene/" + std::to_string(s), objects, placements));
    }
    return scenes;
}

/// Gallery with images_per_object size-jittered exemplars per class.
inline GallerySet make_toy_gallery(const std::vector<ShapeSpec>& objects,
                                   int images_per_object, uint64_t seed) {
    Rng rng(seed);
    std::vector<GalleryObject> out;
    for (const ShapeSpec& spec : objects) {
        GalleryObject object;
        object.object_id = spec.object_id;
        for (int i = 0; i < images_per_object; ++i) {
            const int half = 30 + static_cast<int>(rng.bounded(26));
            ImagePatch patch = make_shape_patch(spec, half);
            patch.source_image_id = "g" + std::to_string(i);
            object.images.push_back(std::move(patch));
        }
        out.push_back(std::move(object));
    }
    return GallerySet::from_objects(std::move(out));
}

/// Writes scenes as one BOP-style scene directory: rgb/, mask_visib/ and
/// scene_gt.json. Object ids must be numeric strings.
inline void write_mini_bop(const std::filesystem::path& scene_dir,
                           const std::vector<SceneImage>& scenes) {
    namespace fs = std::filesystem;
    fs::create_directories(scene_dir / "rgb");
    fs::create_directories(scene_dir / "mask_visib");
    nlohmann::ordered_json gt;
    for (size_t frame = 0; frame < scenes.size(); ++frame) {
        char stem[16];
        std::snprintf(stem, sizeof(stem), "%06zu", frame);
        cv::imwrite((scene_dir / "rgb" / (std::string(stem) + ".png")).string(),
                    scenes[frame].pixels);
        nlohmann::ordered_json frame_gt = nlohmann::ordered_json::array();
        for (size_t inst = 0; inst < scenes[frame].annotations.size(); ++inst) {
            const InstanceAnnotation& a = scenes[frame].annotations[inst];
            frame_gt.push_back({{"obj_id", std::stol(a.object_id)}});
            char mask_name[32];
            std::snprintf(mask_name, sizeof(mask_name), "%06zu_%06zu.png",
                          frame, inst);
            cv::imwrite((scene_dir / "mask_visib" / mask_name).string(),
                        a.mask);
        }
        gt[std::to_string(frame)] = frame_gt;
    }
    std::ofstream out(scene_dir / "scene_gt.json");
    out << gt.dump(1);
}

/// Writes a gallery set as root/<object_id>/<n>.png.
inline void write_gallery_folder(const std::filesystem::path& root,
                                 const GallerySet& gallery) {
    namespace fs = std::filesystem;
    for (const auto& [id, object] : gallery.objects()) {
        fs::create_directories(root / id);
        for (size_t i = 0; i < object.images.size(); ++i) {
            char name[16];
            std::snprintf(name, sizeof(name), "%02zu.png", i);
            cv::imwrite((root / id / name).string(), object.images[i].pixels);
        }
    }
}

/// Unique scratch directory under the system temp root; removed on
/// destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static int counter = 0;
        path_ = std::filesystem::temp_directory_path() /
                ("galdet_test_" + tag + "_" + std::to_string(::getpid()) + "_" +
                 std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

}  // namespace galdet::fixtures
