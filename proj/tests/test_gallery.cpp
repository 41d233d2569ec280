#include <doctest.h>

#include <opencv2/core.hpp>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "galdet/embedder.hpp"
#include "galdet/gallery.hpp"
#include "fixtures.hpp"

using namespace galdet;

namespace {

// 2x3 patch with a distinct value in every pixel so rotations can be
// checked position by position.
cv::Mat numbered_2x3() {
    cv::Mat m(2, 3, CV_8UC3);
    uint8_t v = 1;
    for (int y = 0; y < 2; ++y) {
        for (int x = 0; x < 3; ++x) {
            m.at<cv::Vec3b>(y, x) = {v, v, v};
            v += 1;
        }
    }
    return m;  // [[1,2,3],[4,5,6]]
}

uint8_t px(const cv::Mat& m, int y, int x) {
    return m.at<cv::Vec3b>(y, x)[0];
}

/// version() differs from the real grid-mean embedder while the
/// embeddings stay identical; used to test version-keyed invalidation.
class RenamedEmbedderForTest final : public Embedder {
public:
    Eigen::VectorXf embed(const ImagePatch& patch) const override {
        return inner_.embed(patch);
    }
    int dim() const override { return inner_.dim(); }
    const std::string& version() const override { return version_; }

private:
    GridMeanEmbedder inner_;
    std::string version_ = "grid-mean-v1+retrained";
};

std::string file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in),
            std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_SUITE("gallery") {

TEST_CASE("augment yields the 8 rotations, identity first") {
    ImagePatch patch = fixtures::make_shape_patch(fixtures::toy_objects(1)[0], 12);
    patch.source_image_id = "img0";
    const auto rotations = augment(patch);
    REQUIRE(rotations.size() == 8);
    CHECK(rasters_equal(rotations[0].pixels, patch.pixels));
    CHECK(rotations[0].pixels.data != patch.pixels.data);  // own copy
    for (const auto& r : rotations) {
        CHECK(r.source_object_id == patch.source_object_id);
        CHECK(r.source_image_id == "img0");
        CHECK(!r.pixels.empty());
    }
}

TEST_CASE("right-angle rotations move pixels exactly") {
    const cv::Mat m = numbered_2x3();

    const cv::Mat ccw90 = rotate_patch(m, 2);
    REQUIRE(ccw90.rows == 3);
    REQUIRE(ccw90.cols == 2);
    // [[1,2,3],[4,5,6]] rotated 90 ccw -> [[3,6],[2,5],[1,4]]
    CHECK(px(ccw90, 0, 0) == 3);
    CHECK(px(ccw90, 0, 1) == 6);
    CHECK(px(ccw90, 1, 0) == 2);
    CHECK(px(ccw90, 2, 1) == 4);

    const cv::Mat half = rotate_patch(m, 4);
    REQUIRE(half.rows == 2);
    REQUIRE(half.cols == 3);
    // -> [[6,5,4],[3,2,1]]
    CHECK(px(half, 0, 0) == 6);
    CHECK(px(half, 1, 2) == 1);

    const cv::Mat cw90 = rotate_patch(m, 6);
    REQUIRE(cw90.rows == 3);
    REQUIRE(cw90.cols == 2);
    // -> [[4,1],[5,2],[6,3]]
    CHECK(px(cw90, 0, 0) == 4);
    CHECK(px(cw90, 2, 1) == 3);
}

TEST_CASE("step wraps modulo 8") {
    const cv::Mat m = numbered_2x3();
    CHECK(rasters_equal(rotate_patch(m, 8), rotate_patch(m, 0)));
    CHECK(rasters_equal(rotate_patch(m, -2), rotate_patch(m, 6)));
    CHECK(rasters_equal(rotate_patch(m, 13), rotate_patch(m, 5)));
}

TEST_CASE("diagonal rotations expand the canvas and pad with background") {
    cv::Mat m(10, 10, CV_8UC3, cv::Scalar(100, 150, 200));
    const cv::Mat r = rotate_patch(m, 1);
    // ceil(10*cos45 + 10*sin45) = ceil(14.14...) = 15
    CHECK(r.rows == 15);
    CHECK(r.cols == 15);
    CHECK(r.at<cv::Vec3b>(0, 0) == cv::Vec3b(0, 0, 0));
    CHECK(r.at<cv::Vec3b>(14, 14) == cv::Vec3b(0, 0, 0));
    CHECK(r.at<cv::Vec3b>(7, 7) == cv::Vec3b(100, 150, 200));

    const cv::Mat r3 = rotate_patch(cv::Mat(20, 30, CV_8UC3, cv::Scalar(1, 2, 3)), 1);
    // ceil(30*cos45 + 20*sin45) = ceil(35.35...) = 36, both axes
    CHECK(r3.cols == 36);
    CHECK(r3.rows == 36);

    CHECK_THROWS_AS(rotate_patch(cv::Mat(), 1), Error);
    CHECK_THROWS_AS(rotate_patch(cv::Mat::zeros(4, 4, CV_8U), 1), Error);
}

TEST_CASE("content hash is deterministic and content-sensitive") {
    const auto objects = fixtures::toy_objects(3);
    const GallerySet a = fixtures::make_toy_gallery(objects, 2, 42);
    const GallerySet b = fixtures::make_toy_gallery(objects, 2, 42);
    CHECK(a.content_hash() == b.content_hash());
    CHECK(a.content_hash().size() == 64);

    // flip one pixel of one image
    std::vector<GalleryObject> edited;
    for (const auto& [id, object] : a.objects()) {
        GalleryObject copy;
        copy.object_id = id;
        for (const auto& img : object.images) {
            ImagePatch p;
            p.pixels = img.pixels.clone();
            copy.images.push_back(std::move(p));
        }
        edited.push_back(std::move(copy));
    }
    edited[1].images[0].pixels.at<cv::Vec3b>(3, 3)[1] ^= 1;
    const GallerySet c = GallerySet::from_objects(std::move(edited));
    CHECK(c.content_hash() != a.content_hash());

    // construction order does not matter, content does
    std::vector<GalleryObject> fwd;
    std::vector<GalleryObject> rev;
    for (const auto& [id, object] : a.objects()) {
        fwd.push_back(object);
        rev.insert(rev.begin(), object);
    }
    CHECK(GallerySet::from_objects(std::move(fwd)).content_hash() ==
          GallerySet::from_objects(std::move(rev)).content_hash());
}

TEST_CASE("from_objects validation") {
    const auto objects = fixtures::toy_objects(2);
    CHECK_THROWS_WITH_AS(
        GallerySet::from_objects({GalleryObject{
            "", {fixtures::make_shape_patch(objects[0], 10)}}}),
        doctest::Contains("empty id"), Error);
    CHECK_THROWS_WITH_AS(GallerySet::from_objects({GalleryObject{"a", {}}}),
                         doctest::Contains("empty gallery object: a"), Error);
    CHECK_THROWS_WITH_AS(
        GallerySet::from_objects(
            {GalleryObject{"a", {fixtures::make_shape_patch(objects[0], 10)}},
             GalleryObject{"a", {fixtures::make_shape_patch(objects[1], 10)}}}),
        doctest::Contains("duplicate gallery object id: a"), Error);

    ImagePatch gray;
    gray.pixels = cv::Mat::zeros(8, 8, CV_8U);
    CHECK_THROWS_AS(GallerySet::from_objects({GalleryObject{"a", {gray}}}),
                    Error);
}

TEST_CASE("add, remove and subset build new sets") {
    const auto objects = fixtures::toy_objects(4);
    const GallerySet base = fixtures::make_toy_gallery(objects, 2, 1);

    const GallerySet grown =
        base.add_object("9", {fixtures::make_shape_patch(objects[0], 14)});
    CHECK(grown.size() == 5);
    CHECK(grown.contains("9"));
    CHECK(base.size() == 4);  // base untouched
    CHECK(grown.content_hash() != base.content_hash());

    const GallerySet shrunk = base.remove_object("3");
    CHECK(shrunk.ids() == std::vector<std::string>{"1", "2", "4"});
    CHECK(shrunk.content_hash() != base.content_hash());

    const GallerySet sub = base.subset({"2", "4"});
    CHECK(sub.ids() == std::vector<std::string>{"2", "4"});

    // removing then restoring the same images restores the hash
    const GallerySet restored =
        shrunk.add_object("3", base.objects().at("3").images);
    CHECK(restored.content_hash() == base.content_hash());

    CHECK_THROWS_AS(base.add_object("1", {fixtures::make_shape_patch(objects[0], 10)}),
                    Error);
    CHECK_THROWS_AS(base.add_object("x", {}), Error);
    CHECK_THROWS_AS(base.remove_object("nope"), Error);
    CHECK_THROWS_AS(base.subset({"1", "nope"}), Error);
}

TEST_CASE("build_cache layout and normalization") {
    const auto objects = fixtures::toy_objects(3);
    const GallerySet gallery = fixtures::make_toy_gallery(objects, 2, 7);
    const GridMeanEmbedder embedder;
    const FeatureCache cache = build_cache(gallery, embedder);

    CHECK(cache.built_from_hash == gallery.content_hash());
    CHECK(cache.embedder_version == embedder.version());
    CHECK(cache.dim == embedder.dim());
    REQUIRE(cache.entries.size() == gallery.total_images() * 8);

    // ordered by (object_id, augmentation_index), indices 0..15 per object
    size_t i = 0;
    for (const std::string& id : gallery.ids()) {
        for (uint32_t a = 0; a < 16; ++a, ++i) {
            CHECK(cache.entries[i].object_id == id);
            CHECK(cache.entries[i].augmentation_index == a);
        }
    }
    for (const auto& entry : cache.entries) {
        CHECK(l2_norm(entry.embedding) == doctest::Approx(1.0).epsilon(1e-6));
    }

    // centroids recomputed independently
    REQUIRE(cache.centroids.size() == 3);
    for (const auto& [id, centroid] : cache.centroids) {
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(cache.dim);
        size_t n = 0;
        for (const auto& entry : cache.entries) {
            if (entry.object_id == id) {
                sum += entry.embedding.cast<double>();
                ++n;
            }
        }
        const Eigen::VectorXf expected =
            l2_normalize((sum / static_cast<double>(n)).cast<float>());
        CHECK((centroid - expected).norm() == 0.0f);
    }

    CHECK_THROWS_AS(build_cache(GallerySet(), embedder), Error);
}

TEST_CASE("build_cache is thread-count invariant") {
    const GallerySet gallery =
        fixtures::make_toy_gallery(fixtures::toy_objects(4), 3, 9);
    const GridMeanEmbedder embedder;
    const FeatureCache a = build_cache(gallery, embedder, 1);
    const FeatureCache b = build_cache(gallery, embedder, 4);
    REQUIRE(a.entries.size() == b.entries.size());
    for (size_t i = 0; i < a.entries.size(); ++i) {
        CHECK(a.entries[i].object_id == b.entries[i].object_id);
        CHECK(a.entries[i].augmentation_index == b.entries[i].augmentation_index);
        CHECK(std::memcmp(a.entries[i].embedding.data(),
                          b.entries[i].embedding.data(),
                          sizeof(float) * a.dim) == 0);
    }
}

TEST_CASE("ensure_cache rebuilds only on hash or version change") {
    const auto objects = fixtures::toy_objects(3);
    const GallerySet gallery = fixtures::make_toy_gallery(objects, 2, 3);
    const GridMeanEmbedder embedder;

    auto first = ensure_cache(gallery, std::nullopt, embedder);
    CHECK(first.rebuilt);

    auto second = ensure_cache(gallery, first.cache, embedder);
    CHECK(!second.rebuilt);
    CHECK(second.cache.entries.size() == first.cache.entries.size());

    const GallerySet smaller = gallery.remove_object("2");
    auto third = ensure_cache(smaller, second.cache, embedder);
    CHECK(third.rebuilt);
    CHECK(third.cache.built_from_hash == smaller.content_hash());
    CHECK(third.cache.entries.size() == smaller.total_images() * 8);

    // same gallery, new embedder version: stale even though content matches
    const RenamedEmbedderForTest renamed;
    auto fourth = ensure_cache(smaller, third.cache, renamed);
    CHECK(fourth.rebuilt);
    CHECK(fourth.cache.embedder_version == renamed.version());
    CHECK(!cache_is_current(third.cache, smaller, renamed));
    CHECK(cache_is_current(third.cache, smaller, embedder));
}

TEST_CASE("gallery file round trip") {
    const auto objects = fixtures::toy_objects(3);
    const GallerySet gallery = fixtures::make_toy_gallery(objects, 2, 11);
    fixtures::TempDir tmp("gallery_io");
    const auto path = tmp.path() / "gallery.bin";
    save_gallery(gallery, path);

    const GallerySet back = load_gallery(path);
    CHECK(back.content_hash() == gallery.content_hash());
    CHECK(back.ids() == gallery.ids());
    for (const auto& [id, object] : gallery.objects()) {
        const auto& loaded = back.objects().at(id);
        REQUIRE(loaded.images.size() == object.images.size());
        for (size_t i = 0; i < object.images.size(); ++i) {
            CHECK(rasters_equal(loaded.images[i].pixels, object.images[i].pixels));
            CHECK(loaded.images[i].source_image_id == object.images[i].source_image_id);
        }
    }

    CHECK_THROWS_AS(load_gallery(tmp.path() / "missing.bin"), Error);

    // flip one pixel byte in the middle: the stored hash no longer matches
    std::string bytes = file_bytes(path);
    bytes[bytes.size() / 2] ^= 0x5a;
    const auto corrupt = tmp.path() / "corrupt.bin";
    std::ofstream(corrupt, std::ios::binary) << bytes;
    CHECK_THROWS_AS(load_gallery(corrupt), Error);

    const auto truncated = tmp.path() / "truncated.bin";
    std::ofstream(truncated, std::ios::binary) << bytes.substr(0, bytes.size() / 3);
    CHECK_THROWS_AS(load_gallery(truncated), Error);

    const auto garbage = tmp.path() / "garbage.bin";
    std::ofstream(garbage, std::ios::binary) << "not a gallery file at all";
    CHECK_THROWS_WITH_AS(load_gallery(garbage), doctest::Contains("magic"),
                         Error);
}

TEST_CASE("cache file round trip") {
    const GallerySet gallery =
        fixtures::make_toy_gallery(fixtures::toy_objects(2), 2, 13);
    const GridMeanEmbedder embedder;
    const FeatureCache cache = build_cache(gallery, embedder);

    fixtures::TempDir tmp("cache_io");
    const auto path = tmp.path() / "cache.bin";
    save_cache(cache, path);
    const FeatureCache back = load_cache(path);

    CHECK(back.built_from_hash == cache.built_from_hash);
    CHECK(back.embedder_version == cache.embedder_version);
    CHECK(back.dim == cache.dim);
    REQUIRE(back.entries.size() == cache.entries.size());
    for (size_t i = 0; i < cache.entries.size(); ++i) {
        CHECK(back.entries[i].object_id == cache.entries[i].object_id);
        CHECK(back.entries[i].augmentation_index ==
              cache.entries[i].augmentation_index);
        CHECK(std::memcmp(back.entries[i].embedding.data(),
                          cache.entries[i].embedding.data(),
                          sizeof(float) * cache.dim) == 0);
    }
    REQUIRE(back.centroids.size() == cache.centroids.size());
    for (const auto& [id, centroid] : cache.centroids) {
        CHECK(std::memcmp(back.centroids.at(id).data(), centroid.data(),
                          sizeof(float) * cache.dim) == 0);
    }
    CHECK(cache_is_current(back, gallery, embedder));

    const std::string bytes = file_bytes(path);
    const auto truncated = tmp.path() / "truncated.bin";
    std::ofstream(truncated, std::ios::binary) << bytes.substr(0, bytes.size() - 7);
    CHECK_THROWS_AS(load_cache(truncated), Error);
    CHECK_THROWS_AS(load_cache(tmp.path() / "missing.bin"), Error);
}

}  // TEST_SUITE
