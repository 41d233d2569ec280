#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include "galdet/detector.hpp"
#include "galdet/ingest.hpp"
#include "fixtures.hpp"

using namespace galdet;

namespace {

Eigen::VectorXf vec2(float x, float y) {
    Eigen::VectorXf v(2);
    v << x, y;
    return v;
}

/// Hand-built cache over 2-d embeddings; centroids are the normalized
/// per-object means, like build_cache produces.
FeatureCache hand_cache(
    const std::vector<std::pair<std::string, Eigen::VectorXf>>& entries) {
    FeatureCache cache;
    cache.built_from_hash = "hand";
    cache.embedder_version = "hand-v1";
    cache.dim = static_cast<int>(entries.front().second.size());
    std::map<std::string, uint32_t> next_index;
    std::map<std::string, std::pair<Eigen::VectorXd, int>> sums;
    for (const auto& [id, e] : entries) {
        cache.entries.push_back(CacheEntry{id, next_index[id]++, e});
        auto it = sums.try_emplace(id, Eigen::VectorXd::Zero(cache.dim), 0).first;
        it->second.first += e.cast<double>();
        it->second.second += 1;
    }
    for (const auto& [id, sum] : sums) {
        cache.centroids[id] =
            l2_normalize((sum.first / sum.second).cast<float>());
    }
    std::sort(cache.entries.begin(), cache.entries.end(),
              [](const CacheEntry& a, const CacheEntry& b) {
                  return std::tie(a.object_id, a.augmentation_index) <
                         std::tie(b.object_id, b.augmentation_index);
              });
    return cache;
}

}  // namespace

TEST_SUITE("detector") {

TEST_CASE("match_patch picks the closest entry") {
    const FeatureCache cache = hand_cache({
        {"apple", vec2(1.f, 0.f)},
        {"apple", vec2(1.f, 0.f)},
        {"pear", vec2(0.f, 1.f)},
    });
    MatchStrategy strategy;
    strategy.unknown_threshold = 0.1;

    const MatchResult close = match_patch(vec2(0.8f, 0.6f), cache, strategy);
    CHECK(close.object_id == "apple");
    CHECK(close.similarity == doctest::Approx(0.8).epsilon(1e-6));

    strategy.kind = MatchStrategy::Kind::kCentroid;
    const MatchResult centroid = match_patch(vec2(0.8f, 0.6f), cache, strategy);
    CHECK(centroid.object_id == "apple");
    CHECK(centroid.similarity == doctest::Approx(0.8).epsilon(1e-6));

    const MatchResult other = match_patch(vec2(0.1f, 0.9f), cache, strategy);
    CHECK(other.object_id == "pear");
}

TEST_CASE("ties go to the lexicographically smallest id") {
    const FeatureCache cache = hand_cache({
        {"b", vec2(1.f, 0.f)},
        {"a", vec2(1.f, 0.f)},
        {"c", vec2(1.f, 0.f)},
    });
    for (const auto kind :
         {MatchStrategy::Kind::kClosest, MatchStrategy::Kind::kCentroid}) {
        MatchStrategy strategy;
        strategy.kind = kind;
        const MatchResult r = match_patch(vec2(1.f, 0.f), cache, strategy);
        CHECK(r.object_id == "a");
        CHECK(r.similarity == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("unknown threshold gates the label but not the similarity") {
    const FeatureCache cache = hand_cache({{"apple", vec2(1.f, 0.f)}});
    MatchStrategy strategy;
    strategy.unknown_threshold = 0.9;

    // cos = 0.6: below the gate
    const MatchResult gated = match_patch(vec2(0.6f, 0.8f), cache, strategy);
    CHECK(gated.object_id == kUnknownId);
    CHECK(gated.similarity == doctest::Approx(0.6).epsilon(1e-6));

    strategy.closed_set = true;
    const MatchResult forced = match_patch(vec2(0.6f, 0.8f), cache, strategy);
    CHECK(forced.object_id == "apple");

    strategy.closed_set = false;
    strategy.unknown_threshold = 0.5;
    CHECK(match_patch(vec2(0.6f, 0.8f), cache, strategy).object_id == "apple");
}

TEST_CASE("match_patch input validation") {
    const FeatureCache cache = hand_cache({{"a", vec2(1.f, 0.f)}});
    MatchStrategy strategy;
    Eigen::VectorXf wrong(3);
    wrong << 1.f, 0.f, 0.f;
    CHECK_THROWS_WITH_AS(match_patch(wrong, cache, strategy),
                         doctest::Contains("dimension"), Error);
    CHECK_THROWS_AS(match_patch(vec2(1.f, 0.f), FeatureCache{}, strategy),
                    Error);
}

TEST_CASE("argmax is invariant to positive scaling of cache entries") {
    FeatureCache cache = hand_cache({
        {"a", vec2(0.9f, 0.1f)},
        {"b", vec2(0.2f, 0.8f)},
    });
    MatchStrategy strategy;
    strategy.unknown_threshold = -1.0;
    const Eigen::VectorXf query = vec2(0.7f, 0.3f);
    const MatchResult before = match_patch(query, cache, strategy);
    for (auto& entry : cache.entries) {
        entry.embedding *= 7.5f;
    }
    const MatchResult after = match_patch(query, cache, strategy);
    CHECK(after.object_id == before.object_id);
    CHECK(after.similarity == doctest::Approx(before.similarity).epsilon(1e-6));
}

TEST_CASE("strategies agree when classes form tight separated clusters") {
    // Entries of each class sit within a few degrees of their centroid and
    // the centroids are mutually orthogonal, so picking the closest single
    // entry and picking the closest centroid must name the same id.
    Rng rng(515);
    const int dim = 6;
    const std::vector<std::string> ids = {"a", "b", "c"};
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<std::pair<std::string, Eigen::VectorXf>> entries;
        for (size_t c = 0; c < ids.size(); ++c) {
            for (int k = 0; k < 4; ++k) {
                Eigen::VectorXf e = Eigen::VectorXf::Zero(dim);
                e[2 * c] = 1.0f;
                for (int i = 0; i < dim; ++i) {
                    e[i] += static_cast<float>(rng.uniform(-0.03, 0.03));
                }
                entries.emplace_back(ids[c], l2_normalize(e));
            }
        }
        const FeatureCache cache = hand_cache(entries);

        for (size_t c = 0; c < ids.size(); ++c) {
            for (int q = 0; q < 3; ++q) {
                Eigen::VectorXf query = Eigen::VectorXf::Zero(dim);
                query[2 * c] = 1.0f;
                for (int i = 0; i < dim; ++i) {
                    query[i] += static_cast<float>(rng.uniform(-0.05, 0.05));
                }
                query = l2_normalize(query);

                MatchStrategy strategy;
                const MatchResult closest = match_patch(query, cache, strategy);
                strategy.kind = MatchStrategy::Kind::kCentroid;
                const MatchResult centroid = match_patch(query, cache, strategy);
                CHECK(closest.object_id == ids[c]);
                CHECK(centroid.object_id == closest.object_id);
            }
        }
    }
}

TEST_CASE("detect labels a toy scene correctly") {
    const auto objects = fixtures::toy_objects(3);
    const GallerySet gallery = fixtures::make_toy_gallery(objects, 3, 21);
    const GridMeanEmbedder embedder;
    const FeatureCache cache = build_cache(gallery, embedder);
    const OracleSegmenter segmenter;
    MatchStrategy strategy;
    strategy.unknown_threshold = 0.3;

    const SceneImage scene = fixtures::make_toy_scene(
        "s/0", objects, {{0, 0, 40}, {1, 5, 35}, {2, 10, 44}});
    const auto detections =
        detect(scene, gallery, cache, segmenter, embedder, strategy);
    REQUIRE(detections.size() == 3);

    std::multiset<std::string> expected;
    std::multiset<std::string> got;
    for (const auto& ann : scene.annotations) {
        expected.insert(ann.object_id);
    }
    for (const auto& det : detections) {
        got.insert(det.matched_object_id);
        CHECK(det.similarity > 0.3);
        CHECK(det.score == score_from_similarity(det.similarity));
        CHECK(det.proposal.bbox == tight_box(det.proposal.mask));
    }
    CHECK(got == expected);

    // scores descend
    for (size_t i = 1; i < detections.size(); ++i) {
        CHECK(detections[i - 1].score >= detections[i].score);
    }
}

TEST_CASE("a narrowed gallery never names removed ids") {
    const auto objects = fixtures::toy_objects(4);
    const GallerySet full = fixtures::make_toy_gallery(objects, 2, 22);
    const GallerySet narrowed = full.subset({"1", "2"});
    const GridMeanEmbedder embedder;
    const FeatureCache cache = build_cache(narrowed, embedder);
    MatchStrategy strategy;
    strategy.closed_set = true;

    const auto scenes = fixtures::make_toy_dataset(objects, 4, 23);
    for (const auto& scene : scenes) {
        const auto detections = detect(scene, narrowed, cache,
                                       OracleSegmenter(), embedder, strategy);
        for (const auto& det : detections) {
            CHECK(narrowed.contains(det.matched_object_id));
        }
    }
}

TEST_CASE("detect refuses a stale cache") {
    const auto objects = fixtures::toy_objects(3);
    const GallerySet gallery = fixtures::make_toy_gallery(objects, 2, 24);
    const GridMeanEmbedder embedder;
    const FeatureCache cache = build_cache(gallery, embedder);
    const GallerySet changed = gallery.remove_object("3");
    const SceneImage scene =
        fixtures::make_toy_scene("s/0", objects, {{0, 0, 40}});

    CHECK_THROWS_WITH_AS(detect(scene, changed, cache, OracleSegmenter(),
                                embedder, MatchStrategy{}),
                         doctest::Contains("stale"), Error);
    CHECK_THROWS_WITH_AS(detect(scene, GallerySet{}, cache, OracleSegmenter(),
                                embedder, MatchStrategy{}),
                         doctest::Contains("empty"), Error);
}

TEST_CASE("detection records round trip through jsonl") {
    const auto objects = fixtures::toy_objects(2);
    const GallerySet gallery = fixtures::make_toy_gallery(objects, 2, 25);
    const GridMeanEmbedder embedder;
    const FeatureCache cache = build_cache(gallery, embedder);
    const SceneImage scene = fixtures::make_toy_scene(
        "s/0", objects, {{0, 0, 40}, {1, 5, 35}});
    const auto detections = detect(scene, gallery, cache, OracleSegmenter(),
                                   embedder, MatchStrategy{});
    REQUIRE(detections.size() == 2);

    fixtures::TempDir tmp("records");
    const auto path = tmp.path() / "detections.jsonl";
    {
        std::ofstream out(path);
        append_detection_records(out, scene.image_id, detections);
    }

    const auto records = read_detection_records(path);
    REQUIRE(records.size() == 2);
    for (size_t i = 0; i < records.size(); ++i) {
        CHECK(records[i].image_id == "s/0");
        CHECK(records[i].object_id == detections[i].matched_object_id);
        CHECK(records[i].score == detections[i].score);
        CHECK(records[i].bbox == detections[i].proposal.bbox);
        CHECK(rasters_equal(rle_decode(records[i].mask),
                            detections[i].proposal.mask));
    }

    // serialization is deterministic
    std::ostringstream a;
    std::ostringstream b;
    append_detection_records(a, scene.image_id, detections);
    append_detection_records(b, scene.image_id, detections);
    CHECK(a.str() == b.str());

    CHECK_THROWS_AS(read_detection_records(tmp.path() / "missing.jsonl"),
                    Error);

    std::ofstream(tmp.path() / "bad.jsonl")
        << a.str() << "this is not json\n";
    try {
        read_detection_records(tmp.path() / "bad.jsonl");
        FAIL("expected an error");
    } catch (const Error& e) {
        const std::string msg = e.what();
        CHECK(msg.find(":3: bad detection record") != std::string::npos);
    }
}

TEST_CASE("strategy names parse both ways") {
    CHECK(parse_strategy_kind("closest") == MatchStrategy::Kind::kClosest);
    CHECK(parse_strategy_kind("centroid") == MatchStrategy::Kind::kCentroid);
    CHECK(strategy_kind_name(MatchStrategy::Kind::kClosest) ==
          std::string("closest"));
    CHECK(strategy_kind_name(MatchStrategy::Kind::kCentroid) ==
          std::string("centroid"));
    CHECK_THROWS_AS(parse_strategy_kind("knn"), Error);
}

}  // TEST_SUITE
