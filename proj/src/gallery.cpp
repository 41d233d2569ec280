#include "galdet/gallery.hpp"

#include <opencv2/imgproc.hpp>

#include <cmath>
#include <exception>
#include <fstream>
#include <thread>

#include "galdet/binio.hpp"
#include "galdet/hash.hpp"

namespace galdet {

namespace {

constexpr char kGalleryMagic[9] = "GLDTGAL1";
constexpr uint32_t kGalleryVersion = 1;
constexpr char kCacheMagic[9] = "GLDTCSH1";
constexpr uint32_t kCacheVersion = 1;

void validate_patch(const ImagePatch& patch, const std::string& object_id) {
    if (patch.pixels.empty() || patch.pixels.type() != CV_8UC3) {
        throw Error("gallery object '" + object_id +
                    "': images must be non-empty 8UC3 rasters");
    }
}

void hash_pixels(Sha256& h, const cv::Mat& pixels) {
    h.update_u32(static_cast<uint32_t>(pixels.rows));
    h.update_u32(static_cast<uint32_t>(pixels.cols));
    const size_t row_bytes = pixels.cols * pixels.elemSize();
    for (int y = 0; y < pixels.rows; ++y) {
        h.update(pixels.ptr(y), row_bytes);
    }
}

std::string hash_objects(const std::map<std::string, GalleryObject>& objects) {
    Sha256 h;
    h.update_u64(objects.size());
    for (const auto& [id, object] : objects) {
        h.update_str(id);
        h.update_u64(object.images.size());
        for (const ImagePatch& patch : object.images) {
            hash_pixels(h, patch.pixels);
        }
    }
    return h.hex_digest();
}

/// Runs fn(i) for i in [0, n) across threads; results land in per-index
/// slots so the outcome is independent of scheduling.
template <typename Fn>
void parallel_indexed(size_t n, int num_threads, Fn&& fn) {
    if (n == 0) {
        return;
    }
    size_t workers = num_threads > 0
                         ? static_cast<size_t>(num_threads)
                         : std::max(1u, std::thread::hardware_concurrency());
    workers = std::min(workers, n);

    std::vector<std::exception_ptr> errors(n);
    if (workers <= 1) {
        for (size_t i = 0; i < n; ++i) {
            try {
                fn(i);
            } catch (...) {
                errors[i] = std::current_exception();
                break;
            }
        }
    } else {
        std::vector<std::thread> threads;
        threads.reserve(workers);
        for (size_t t = 0; t < workers; ++t) {
            threads.emplace_back([&, t]() {
                for (size_t i = t; i < n; i += workers) {
                    try {
                        fn(i);
                    } catch (...) {
                        errors[i] = std::current_exception();
                        return;
                    }
                }
            });
        }
        for (auto& th : threads) {
            th.join();
        }
    }
    for (size_t i = 0; i < n; ++i) {
        if (errors[i]) {
            std::rethrow_exception(errors[i]);
        }
    }
}

}  // namespace

GallerySet::GallerySet(std::map<std::string, GalleryObject> objects)
    : objects_(std::move(objects)), content_hash_(hash_objects(objects_)) {}

GallerySet GallerySet::from_objects(std::vector<GalleryObject> objects) {
    std::map<std::string, GalleryObject> by_id;
    for (auto& object : objects) {
        if (object.object_id.empty()) {
            throw Error("gallery object with empty id");
        }
        if (object.images.empty()) {
            throw Error("empty gallery object: " + object.object_id);
        }
        for (const ImagePatch& patch : object.images) {
            validate_patch(patch, object.object_id);
        }
        const std::string id = object.object_id;
        if (!by_id.emplace(id, std::move(object)).second) {
            throw Error("duplicate gallery object id: " + id);
        }
    }
    return GallerySet(std::move(by_id));
}

size_t GallerySet::total_images() const {
    size_t n = 0;
    for (const auto& [id, object] : objects_) {
        n += object.images.size();
    }
    return n;
}

std::vector<std::string> GallerySet::ids() const {
    std::vector<std::string> out;
    out.reserve(objects_.size());
    for (const auto& [id, object] : objects_) {
        out.push_back(id);
    }
    return out;
}

GallerySet GallerySet::add_object(const std::string& object_id,
                                  std::vector<ImagePatch> images) const {
    if (contains(object_id)) {
        throw Error("add_object: id already present: " + object_id);
    }
    if (images.empty()) {
        throw Error("empty gallery object: " + object_id);
    }
    for (const ImagePatch& patch : images) {
        validate_patch(patch, object_id);
    }
    auto objects = objects_;
    objects.emplace(object_id, GalleryObject{object_id, std::move(images)});
    return GallerySet(std::move(objects));
}

GallerySet GallerySet::remove_object(const std::string& object_id) const {
    auto objects = objects_;
    if (objects.erase(object_id) == 0) {
        throw Error("remove_object: no such id: " + object_id);
    }
    return GallerySet(std::move(objects));
}

GallerySet GallerySet::subset(const std::vector<std::string>& object_ids) const {
    std::map<std::string, GalleryObject> objects;
    for (const std::string& id : object_ids) {
        auto it = objects_.find(id);
        if (it == objects_.end()) {
            throw Error("subset: no such id: " + id);
        }
        objects.emplace(id, it->second);
    }
    return GallerySet(std::move(objects));
}

cv::Mat rotate_patch(const cv::Mat& pixels, int step) {
    if (pixels.empty() || pixels.type() != CV_8UC3) {
        throw Error("rotate_patch: pixels must be non-empty 8UC3");
    }
    const int k = ((step % kAugmentations) + kAugmentations) % kAugmentations;
    cv::Mat out;
    switch (k) {
        case 0:
            out = pixels.clone();
            break;
        case 2:
            cv::rotate(pixels, out, cv::ROTATE_90_COUNTERCLOCKWISE);
            break;
        case 4:
            cv::rotate(pixels, out, cv::ROTATE_180);
            break;
        case 6:
            cv::rotate(pixels, out, cv::ROTATE_90_CLOCKWISE);
            break;
        default: {
            // Diagonal rotations: expand the canvas to the rotated
            // bounding box and fill the new area with background.
            const int w = pixels.cols;
            const int h = pixels.rows;
            cv::Mat m = cv::getRotationMatrix2D(
                cv::Point2f(w / 2.0f, h / 2.0f), 45.0 * k, 1.0);
            const double c = std::abs(m.at<double>(0, 0));
            const double s = std::abs(m.at<double>(0, 1));
            const int nw = static_cast<int>(std::ceil(w * c + h * s));
            const int nh = static_cast<int>(std::ceil(w * s + h * c));
            m.at<double>(0, 2) += nw / 2.0 - w / 2.0;
            m.at<double>(1, 2) += nh / 2.0 - h / 2.0;
            cv::warpAffine(pixels, out, m, cv::Size(nw, nh), cv::INTER_LINEAR,
                           cv::BORDER_CONSTANT, cv::Scalar(0, 0, 0));
            break;
        }
    }
    return out;
}

std::vector<ImagePatch> augment(const ImagePatch& patch) {
    std::vector<ImagePatch> out;
    out.reserve(kAugmentations);
    for (int k = 0; k < kAugmentations; ++k) {
        ImagePatch rotated;
        rotated.source_object_id = patch.source_object_id;
        rotated.source_image_id = patch.source_image_id;
        rotated.pixels = rotate_patch(patch.pixels, k);
        out.push_back(std::move(rotated));
    }
    return out;
}

FeatureCache build_cache(const GallerySet& gallery, const Embedder& embedder,
                         int num_threads) {
    if (gallery.empty()) {
        throw Error("build_cache: gallery is empty");
    }

    struct Task {
        const ImagePatch* source;
        std::string object_id;
        uint32_t augmentation_index;
    };
    std::vector<Task> tasks;
    for (const auto& [id, object] : gallery.objects()) {
        for (size_t img = 0; img < object.images.size(); ++img) {
            for (uint32_t k = 0; k < kAugmentations; ++k) {
                tasks.push_back(
                    {&object.images[img], id,
                     static_cast<uint32_t>(img) * kAugmentations + k});
            }
        }
    }

    FeatureCache cache;
    cache.built_from_hash = gallery.content_hash();
    cache.embedder_version = embedder.version();
    cache.dim = embedder.dim();
    cache.entries.resize(tasks.size());

    parallel_indexed(tasks.size(), num_threads, [&](size_t i) {
        const Task& task = tasks[i];
        // One augmentation set per source image; recomputed per task to
        // keep tasks independent (rotation cost is small next to embed).
        std::vector<ImagePatch> rotations;
        try {
            rotations = augment(*task.source);
            const ImagePatch& rotated =
                rotations[task.augmentation_index % kAugmentations];
            Eigen::VectorXf e = embedder.embed(rotated);
            if (e.size() != cache.dim) {
                throw Error("embedding dimension " + std::to_string(e.size()) +
                            " != expected " + std::to_string(cache.dim));
            }
            cache.entries[i] = CacheEntry{task.object_id, task.augmentation_index,
                                          l2_normalize(e)};
        } catch (const Error& e) {
            throw Error("build_cache: object '" + task.object_id +
                        "' augmentation " +
                        std::to_string(task.augmentation_index) + ": " +
                        e.what());
        }
    });

    // Centroid = unit-norm mean of the object's entry vectors.
    std::map<std::string, std::pair<Eigen::VectorXd, size_t>> sums;
    for (const CacheEntry& entry : cache.entries) {
        auto [it, inserted] = sums.try_emplace(
            entry.object_id, Eigen::VectorXd::Zero(cache.dim), 0);
        it->second.first += entry.embedding.cast<double>();
        it->second.second += 1;
    }
    for (const auto& [id, sum] : sums) {
        const Eigen::VectorXf mean =
            (sum.first / static_cast<double>(sum.second)).cast<float>();
        try {
            cache.centroids[id] = l2_normalize(mean);
        } catch (const Error&) {
            throw Error("build_cache: centroid of object '" + id +
                        "' is the zero vector");
        }
    }
    return cache;
}

bool cache_is_current(const FeatureCache& cache, const GallerySet& gallery,
                      const Embedder& embedder) {
    return cache.built_from_hash == gallery.content_hash() &&
           cache.embedder_version == embedder.version();
}

EnsureResult ensure_cache(const GallerySet& gallery,
                          std::optional<FeatureCache> existing,
                          const Embedder& embedder, int num_threads) {
    if (existing && cache_is_current(*existing, gallery, embedder)) {
        return EnsureResult{std::move(*existing), false};
    }
    return EnsureResult{build_cache(gallery, embedder, num_threads), true};
}

void save_gallery(const GallerySet& gallery, const std::filesystem::path& path) {
    atomic_write_file(path, [&](std::ostream& out) {
        BinWriter w(out);
        w.magic(kGalleryMagic, kGalleryVersion);
        w.str(gallery.content_hash());
        w.u64(gallery.size());
        for (const auto& [id, object] : gallery.objects()) {
            w.str(id);
            w.u64(object.images.size());
            for (const ImagePatch& patch : object.images) {
                w.str(patch.source_image_id.value_or(""));
                w.u32(static_cast<uint32_t>(patch.pixels.rows));
                w.u32(static_cast<uint32_t>(patch.pixels.cols));
                const size_t row_bytes =
                    patch.pixels.cols * patch.pixels.elemSize();
                for (int y = 0; y < patch.pixels.rows; ++y) {
                    w.bytes(patch.pixels.ptr(y), row_bytes);
                }
            }
        }
    });
}

GallerySet load_gallery(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("gallery file not found: " + path.string());
    }
    BinReader r(in, path.string());
    r.magic(kGalleryMagic, kGalleryVersion);
    const std::string stored_hash = r.str();

    std::vector<GalleryObject> objects;
    const uint64_t num_objects = r.u64();
    for (uint64_t i = 0; i < num_objects; ++i) {
        GalleryObject object;
        object.object_id = r.str();
        const uint64_t num_images = r.u64();
        for (uint64_t j = 0; j < num_images; ++j) {
            ImagePatch patch;
            const std::string source = r.str();
            if (!source.empty()) {
                patch.source_image_id = source;
            }
            patch.source_object_id = object.object_id;
            const uint32_t rows = r.u32();
            const uint32_t cols = r.u32();
            if (rows == 0 || cols == 0 || rows > 65536 || cols > 65536) {
                throw Error(path.string() + ": implausible image shape");
            }
            patch.pixels.create(static_cast<int>(rows), static_cast<int>(cols),
                                CV_8UC3);
            r.bytes(patch.pixels.ptr(0), static_cast<size_t>(rows) * cols * 3);
            object.images.push_back(std::move(patch));
        }
        objects.push_back(std::move(object));
    }
    GallerySet gallery = GallerySet::from_objects(std::move(objects));
    if (gallery.content_hash() != stored_hash) {
        throw Error(path.string() +
                    ": content hash mismatch, file is corrupt or was edited");
    }
    return gallery;
}

void save_cache(const FeatureCache& cache, const std::filesystem::path& path) {
    atomic_write_file(path, [&](std::ostream& out) {
        BinWriter w(out);
        w.magic(kCacheMagic, kCacheVersion);
        w.str(cache.built_from_hash);
        w.str(cache.embedder_version);
        w.u32(static_cast<uint32_t>(cache.dim));
        w.u64(cache.entries.size());
        for (const CacheEntry& entry : cache.entries) {
            w.str(entry.object_id);
            w.u32(entry.augmentation_index);
            w.f32_block(entry.embedding.data(),
                        static_cast<size_t>(entry.embedding.size()));
        }
        w.u64(cache.centroids.size());
        for (const auto& [id, centroid] : cache.centroids) {
            w.str(id);
            w.f32_block(centroid.data(), static_cast<size_t>(centroid.size()));
        }
    });
}

FeatureCache load_cache(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cache file not found: " + path.string());
    }
    BinReader r(in, path.string());
    r.magic(kCacheMagic, kCacheVersion);

    FeatureCache cache;
    cache.built_from_hash = r.str();
    cache.embedder_version = r.str();
    cache.dim = static_cast<int>(r.u32());
    if (cache.dim <= 0 || cache.dim > (1 << 20)) {
        throw Error(path.string() + ": implausible embedding dimension");
    }
    const uint64_t num_entries = r.u64();
    cache.entries.resize(num_entries);
    for (uint64_t i = 0; i < num_entries; ++i) {
        CacheEntry& entry = cache.entries[i];
        entry.object_id = r.str();
        entry.augmentation_index = r.u32();
        entry.embedding.resize(cache.dim);
        r.f32_block(entry.embedding.data(), static_cast<size_t>(cache.dim));
    }
    const uint64_t num_centroids = r.u64();
    for (uint64_t i = 0; i < num_centroids; ++i) {
        const std::string id = r.str();
        Eigen::VectorXf centroid(cache.dim);
        r.f32_block(centroid.data(), static_cast<size_t>(cache.dim));
        cache.centroids.emplace(id, std::move(centroid));
    }
    return cache;
}

}  // namespace galdet
