#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "galdet/embedder.hpp"
#include "galdet/types.hpp"

namespace galdet {

/// Number of rotation augmentations applied to every gallery image.
inline constexpr int kAugmentations = 8;

struct GalleryObject {
    std::string object_id;
    std::vector<ImagePatch> images;
};

/// The current class vocabulary: named objects with a few exemplar images
/// each. Immutable; mutations return a new set with a fresh content hash.
/// The hash covers ids and raw pixel bytes in deterministic order, so two
/// sets with identical content always hash identically.
class GallerySet {
public:
    GallerySet() = default;
    static GallerySet from_objects(std::vector<GalleryObject> objects);

    const std::map<std::string, GalleryObject>& objects() const {
        return objects_;
    }
    bool empty() const { return objects_.empty(); }
    size_t size() const { return objects_.size(); }
    size_t total_images() const;
    std::vector<std::string> ids() const;
    bool contains(const std::string& object_id) const {
        return objects_.count(object_id) > 0;
    }
    const std::string& content_hash() const { return content_hash_; }

    GallerySet add_object(const std::string& object_id,
                          std::vector<ImagePatch> images) const;
    GallerySet remove_object(const std::string& object_id) const;
    GallerySet subset(const std::vector<std::string>& object_ids) const;

private:
    explicit GallerySet(std::map<std::string, GalleryObject> objects);

    std::map<std::string, GalleryObject> objects_;
    std::string content_hash_;
};

/// Rotation by step * 45 degrees counterclockwise. Step 0 copies the
/// input; right-angle steps are lossless; diagonal steps expand the
/// canvas to hold the rotated content, new area filled with background.
cv::Mat rotate_patch(const cv::Mat& pixels, int step);

/// The 8 rotations of a patch by multiples of 45 degrees, counterclockwise;
/// element 0 is the unrotated input.
std::vector<ImagePatch> augment(const ImagePatch& patch);

struct CacheEntry {
    std::string object_id;
    /// image_index * 8 + rotation step; unique within an object.
    uint32_t augmentation_index = 0;
    Eigen::VectorXf embedding;  // unit norm
};

/// Buffered gallery features. Rebuilt only when the gallery content hash
/// or the embedder version changes.
struct FeatureCache {
    std::string built_from_hash;
    std::string embedder_version;
    int dim = 0;
    /// Ordered by (object_id, augmentation_index); 8 entries per image.
    std::vector<CacheEntry> entries;
    /// Unit-norm mean of each object's entries.
    std::map<std::string, Eigen::VectorXf> centroids;
};

FeatureCache build_cache(const GallerySet& gallery, const Embedder& embedder,
                         int num_threads = 0);

bool cache_is_current(const FeatureCache& cache, const GallerySet& gallery,
                      const Embedder& embedder);

struct EnsureResult {
    FeatureCache cache;
    bool rebuilt = false;
};

/// Returns the cache untouched when it matches (gallery hash, embedder
/// version); rebuilds otherwise. The rebuilt flag feeds rebuild counters.
EnsureResult ensure_cache(const GallerySet& gallery,
                          std::optional<FeatureCache> existing,
                          const Embedder& embedder, int num_threads = 0);

void save_gallery(const GallerySet& gallery, const std::filesystem::path& path);
GallerySet load_gallery(const std::filesystem::path& path);
void save_cache(const FeatureCache& cache, const std::filesystem::path& path);
FeatureCache load_cache(const std::filesystem::path& path);

}  // namespace galdet
