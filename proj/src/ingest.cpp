#include "galdet/ingest.hpp"

#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

namespace galdet {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string frame_file_stem(long frame) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06ld", frame);
    return buf;
}

cv::Mat read_color_image(const fs::path& path) {
    cv::Mat img = cv::imread(path.string(), cv::IMREAD_COLOR);
    if (img.empty()) {
        throw Error("unreadable image: " + path.string());
    }
    return img;
}

bool is_image_file(const fs::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

}  // namespace

std::vector<SceneImage> parse_bop_scene(const fs::path& scene_dir) {
    if (!fs::is_directory(scene_dir)) {
        throw Error("scene directory not found: " + scene_dir.string());
    }
    const fs::path gt_path = scene_dir / "scene_gt.json";
    std::ifstream gt_in(gt_path);
    if (!gt_in) {
        throw Error("ground-truth file not found: " + gt_path.string());
    }
    json gt;
    try {
        gt_in >> gt;
    } catch (const json::exception& e) {
        throw Error("malformed JSON in " + gt_path.string() + ": " + e.what());
    }
    if (!gt.is_object()) {
        throw Error(gt_path.string() + ": expected a frame-keyed object");
    }

    const std::string scene_name = scene_dir.filename().string();

    // JSON keys are stringified frame numbers; order them numerically.
    std::vector<std::pair<long, const json*>> frames;
    for (auto it = gt.begin(); it != gt.end(); ++it) {
        long frame = 0;
        try {
            frame = std::stol(it.key());
        } catch (const std::exception&) {
            throw Error(gt_path.string() + ": non-numeric frame key '" +
                        it.key() + "'");
        }
        frames.emplace_back(frame, &it.value());
    }
    std::sort(frames.begin(), frames.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    std::vector<SceneImage> scenes;
    scenes.reserve(frames.size());
    for (const auto& [frame, instances] : frames) {
        const std::string stem = frame_file_stem(frame);
        fs::path rgb_path = scene_dir / "rgb" / (stem + ".png");
        if (!fs::exists(rgb_path)) {
            rgb_path = scene_dir / "rgb" / (stem + ".jpg");
        }
        if (!fs::exists(rgb_path)) {
            throw Error("missing color image for frame " +
                        std::to_string(frame) + " in " +
                        (scene_dir / "rgb").string());
        }

        SceneImage scene;
        scene.image_id = scene_name + "/" + std::to_string(frame);
        scene.pixels = read_color_image(rgb_path);

        if (!instances->is_array()) {
            throw Error(gt_path.string() + ": frame " + std::to_string(frame) +
                        " entry is not a list");
        }
        for (size_t inst = 0; inst < instances->size(); ++inst) {
            const json& record = (*instances)[inst];
            if (!record.contains("obj_id") ||
                !record["obj_id"].is_number_integer()) {
                throw Error(gt_path.string() + ": frame " +
                            std::to_string(frame) + " instance " +
                            std::to_string(inst) + " lacks integer obj_id");
            }
            const std::string object_id =
                std::to_string(record["obj_id"].get<long>());

            char mask_name[32];
            std::snprintf(mask_name, sizeof(mask_name), "%06ld_%06zu.png",
                          frame, inst);
            const fs::path mask_path = scene_dir / "mask_visib" / mask_name;
            cv::Mat mask = cv::imread(mask_path.string(), cv::IMREAD_GRAYSCALE);
            if (mask.empty()) {
                throw Error("missing visible mask for frame " +
                            std::to_string(frame) + " instance " +
                            std::to_string(inst) + ": " + mask_path.string());
            }
            if (mask.rows != scene.pixels.rows ||
                mask.cols != scene.pixels.cols) {
                throw Error(mask_path.string() +
                            ": mask size differs from the color image");
            }
            if (count_foreground(mask) == 0) {
                // Fully occluded instance: nothing visible to crop or match.
                continue;
            }
            InstanceAnnotation annotation;
            annotation.object_id = object_id;
            annotation.mask = mask;
            annotation.bbox = tight_box(mask);
            scene.annotations.push_back(std::move(annotation));
        }
        scenes.push_back(std::move(scene));
    }
    return scenes;
}

ImagePatch extract_patch(const SceneImage& image,
                         const InstanceAnnotation& annotation) {
    const Box& box = annotation.bbox;
    if (box.w <= 0 || box.h <= 0 ||
        !box_in_bounds(box, image.pixels.cols, image.pixels.rows)) {
        throw Error("annotation bbox outside image bounds in " +
                    image.image_id);
    }
    if (annotation.mask.rows != image.pixels.rows ||
        annotation.mask.cols != image.pixels.cols) {
        throw Error("annotation mask size differs from image in " +
                    image.image_id);
    }
    const cv::Rect roi(box.x, box.y, box.w, box.h);
    const cv::Mat mask_roi = annotation.mask(roi);
    if (cv::countNonZero(mask_roi) == 0) {
        throw Error("annotation mask has no foreground in " + image.image_id);
    }

    ImagePatch patch;
    patch.pixels = cv::Mat::zeros(box.h, box.w, CV_8UC3);
    image.pixels(roi).copyTo(patch.pixels, mask_roi);
    patch.source_object_id = annotation.object_id;
    patch.source_image_id = image.image_id;
    return patch;
}

ClassDataset build_classification_dataset(
    const std::vector<SceneImage>& scenes) {
    ClassDataset dataset;
    for (const SceneImage& scene : scenes) {
        for (const InstanceAnnotation& annotation : scene.annotations) {
            dataset[annotation.object_id].push_back(
                extract_patch(scene, annotation));
        }
    }
    return dataset;
}

GallerySet parse_gallery_folder(const fs::path& root) {
    if (!fs::is_directory(root)) {
        throw Error("gallery folder not found: " + root.string());
    }
    std::vector<fs::path> subdirs;
    for (const auto& entry : fs::directory_iterator(root)) {
        const std::string name = entry.path().filename().string();
        if (entry.is_directory() && !name.empty() && name[0] != '.') {
            subdirs.push_back(entry.path());
        }
    }
    std::sort(subdirs.begin(), subdirs.end());

    std::vector<GalleryObject> objects;
    for (const fs::path& dir : subdirs) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(dir)) {
            const std::string name = entry.path().filename().string();
            if (entry.is_regular_file() && !name.empty() && name[0] != '.' &&
                is_image_file(entry.path())) {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());

        GalleryObject object;
        object.object_id = dir.filename().string();
        if (files.empty()) {
            throw Error("empty gallery object: " + object.object_id);
        }
        for (const fs::path& file : files) {
            ImagePatch patch;
            patch.pixels = read_color_image(file);
            patch.source_object_id = object.object_id;
            patch.source_image_id = file.filename().string();
            object.images.push_back(std::move(patch));
        }
        objects.push_back(std::move(object));
    }
    return GallerySet::from_objects(std::move(objects));
}

size_t export_patches(const ClassDataset& dataset, const fs::path& out_dir) {
    size_t written = 0;
    for (const auto& [object_id, patches] : dataset) {
        const fs::path class_dir = out_dir / object_id;
        fs::create_directories(class_dir);
        for (size_t i = 0; i < patches.size(); ++i) {
            char name[16];
            std::snprintf(name, sizeof(name), "%05zu.png", i);
            const fs::path path = class_dir / name;
            if (!cv::imwrite(path.string(), patches[i].pixels)) {
                throw Error("failed to write patch: " + path.string());
            }
            ++written;
        }
    }
    return written;
}

}  // namespace galdet
