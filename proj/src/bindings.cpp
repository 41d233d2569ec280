// Python bindings for the main pipeline operations: gallery management,
// feature caching, matching, detection and both evaluators.

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <memory>

#include "galdet/detector.hpp"
#include "galdet/embedder.hpp"
#include "galdet/gallery.hpp"
#include "galdet/ingest.hpp"
#include "galdet/metrics.hpp"
#include "galdet/net.hpp"
#include "galdet/overlay.hpp"
#include "galdet/rle.hpp"
#include "galdet/segmenter.hpp"
#include "galdet/train.hpp"
#include "galdet/types.hpp"

namespace py = pybind11;
using namespace galdet;

namespace {

py::array_t<uint8_t> mat_to_array(const cv::Mat& mat) {
    if (mat.empty()) {
        return py::array_t<uint8_t>();
    }
    if (mat.type() == CV_8UC3) {
        py::array_t<uint8_t> out({mat.rows, mat.cols, 3});
        cv::Mat view(mat.rows, mat.cols, CV_8UC3, out.mutable_data());
        mat.copyTo(view);
        return out;
    }
    if (mat.type() == CV_8UC1) {
        py::array_t<uint8_t> out({mat.rows, mat.cols});
        cv::Mat view(mat.rows, mat.cols, CV_8UC1, out.mutable_data());
        mat.copyTo(view);
        return out;
    }
    throw Error("unsupported raster type for conversion");
}

cv::Mat array_to_mat(const py::array& in) {
    py::array_t<uint8_t, py::array::c_style | py::array::forcecast> arr(in);
    if (arr.ndim() == 3 && arr.shape(2) == 3) {
        cv::Mat mat(static_cast<int>(arr.shape(0)),
                    static_cast<int>(arr.shape(1)), CV_8UC3);
        std::memcpy(mat.data, arr.data(), arr.size());
        return mat;
    }
    if (arr.ndim() == 2) {
        cv::Mat mat(static_cast<int>(arr.shape(0)),
                    static_cast<int>(arr.shape(1)), CV_8UC1);
        std::memcpy(mat.data, arr.data(), arr.size());
        return mat;
    }
    throw Error("expected a HxWx3 or HxW uint8 array");
}

ImagePatch make_patch(const py::array& pixels,
                      const std::optional<std::string>& object_id,
                      const std::optional<std::string>& image_id) {
    ImagePatch patch;
    patch.pixels = array_to_mat(pixels);
    if (patch.pixels.type() != CV_8UC3) {
        throw Error("patch pixels must be HxWx3 uint8");
    }
    patch.source_object_id = object_id;
    patch.source_image_id = image_id;
    return patch;
}

MatchStrategy make_strategy(const std::string& kind, double unknown_threshold,
                            bool closed_set) {
    MatchStrategy strategy;
    strategy.kind = parse_strategy_kind(kind);
    strategy.unknown_threshold = unknown_threshold;
    strategy.closed_set = closed_set;
    return strategy;
}

}  // namespace

PYBIND11_MODULE(_galdet, m) {
    m.doc() = "open-set object detection against a user-supplied gallery";

    py::register_exception<Error>(m, "GaldetError", PyExc_RuntimeError);

    py::class_<Box>(m, "Box")
        .def(py::init<>())
        .def(py::init([](int x, int y, int w, int h) {
                 return Box{x, y, w, h};
             }),
             py::arg("x"), py::arg("y"), py::arg("w"), py::arg("h"))
        .def_readwrite("x", &Box::x)
        .def_readwrite("y", &Box::y)
        .def_readwrite("w", &Box::w)
        .def_readwrite("h", &Box::h)
        .def("area", &Box::area)
        .def("__eq__", [](const Box& a, const Box& b) { return a == b; })
        .def("__repr__", [](const Box& b) {
            return "Box(x=" + std::to_string(b.x) + ", y=" + std::to_string(b.y) +
                   ", w=" + std::to_string(b.w) + ", h=" + std::to_string(b.h) +
                   ")";
        });

    py::class_<ImagePatch>(m, "ImagePatch")
        .def(py::init(&make_patch), py::arg("pixels"),
             py::arg("object_id") = std::nullopt,
             py::arg("image_id") = std::nullopt)
        .def_property_readonly(
            "pixels", [](const ImagePatch& p) { return mat_to_array(p.pixels); })
        .def_readonly("source_object_id", &ImagePatch::source_object_id)
        .def_readonly("source_image_id", &ImagePatch::source_image_id);

    py::class_<InstanceAnnotation>(m, "InstanceAnnotation")
        .def(py::init([](const std::string& object_id, const py::array& mask) {
                 InstanceAnnotation a;
                 a.object_id = object_id;
                 a.mask = array_to_mat(mask);
                 if (a.mask.type() != CV_8UC1) {
                     throw Error("mask must be HxW uint8");
                 }
                 a.bbox = tight_box(a.mask);
                 return a;
             }),
             py::arg("object_id"), py::arg("mask"))
        .def_readonly("object_id", &InstanceAnnotation::object_id)
        .def_readonly("bbox", &InstanceAnnotation::bbox)
        .def_property_readonly("mask", [](const InstanceAnnotation& a) {
            return mat_to_array(a.mask);
        });

    py::class_<SceneImage>(m, "SceneImage")
        .def(py::init([](const std::string& image_id, const py::array& pixels,
                         std::vector<InstanceAnnotation> annotations) {
                 SceneImage s;
                 s.image_id = image_id;
                 s.pixels = array_to_mat(pixels);
                 if (s.pixels.type() != CV_8UC3) {
                     throw Error("scene pixels must be HxWx3 uint8");
                 }
                 s.annotations = std::move(annotations);
                 return s;
             }),
             py::arg("image_id"), py::arg("pixels"),
             py::arg("annotations") = std::vector<InstanceAnnotation>{})
        .def_readonly("image_id", &SceneImage::image_id)
        .def_property_readonly(
            "pixels", [](const SceneImage& s) { return mat_to_array(s.pixels); })
        .def_readonly("annotations", &SceneImage::annotations);

    py::class_<SegmentProposal>(m, "SegmentProposal")
        .def_property_readonly(
            "mask", [](const SegmentProposal& p) { return mat_to_array(p.mask); })
        .def_readonly("bbox", &SegmentProposal::bbox)
        .def_readonly("confidence", &SegmentProposal::confidence);

    py::class_<Detection>(m, "Detection")
        .def_readonly("proposal", &Detection::proposal)
        .def_readonly("matched_object_id", &Detection::matched_object_id)
        .def_readonly("similarity", &Detection::similarity)
        .def_readonly("score", &Detection::score);

    py::class_<GallerySet>(m, "GallerySet")
        .def(py::init(
                 [](const std::map<std::string, std::vector<ImagePatch>>& objs) {
                     std::vector<GalleryObject> objects;
                     for (const auto& [id, images] : objs) {
                         objects.push_back(GalleryObject{id, images});
                     }
                     return GallerySet::from_objects(std::move(objects));
                 }),
             py::arg("objects"))
        .def("__len__", &GallerySet::size)
        .def("__contains__", &GallerySet::contains)
        .def_property_readonly("ids", &GallerySet::ids)
        .def_property_readonly("content_hash", &GallerySet::content_hash)
        .def("total_images", &GallerySet::total_images)
        .def("images_of",
             [](const GallerySet& g, const std::string& id) {
                 const auto it = g.objects().find(id);
                 if (it == g.objects().end()) {
                     throw Error("no such gallery object: " + id);
                 }
                 return it->second.images;
             })
        .def("add_object", &GallerySet::add_object, py::arg("object_id"),
             py::arg("images"))
        .def("remove_object", &GallerySet::remove_object, py::arg("object_id"))
        .def("subset", &GallerySet::subset, py::arg("object_ids"));

    py::class_<CacheEntry>(m, "CacheEntry")
        .def_readonly("object_id", &CacheEntry::object_id)
        .def_readonly("augmentation_index", &CacheEntry::augmentation_index)
        .def_readonly("embedding", &CacheEntry::embedding);

    py::class_<FeatureCache>(m, "FeatureCache")
        .def_readonly("built_from_hash", &FeatureCache::built_from_hash)
        .def_readonly("embedder_version", &FeatureCache::embedder_version)
        .def_readonly("dim", &FeatureCache::dim)
        .def_readonly("entries", &FeatureCache::entries)
        .def_readonly("centroids", &FeatureCache::centroids);

    py::class_<Embedder, std::shared_ptr<Embedder>>(m, "Embedder")
        .def("embed", &Embedder::embed, py::arg("patch"))
        .def_property_readonly("dim", &Embedder::dim)
        .def_property_readonly("version", &Embedder::version);

    m.def(
        "make_embedder",
        [](const std::string& backbone, int input_size, int feature_dim,
           const std::optional<std::filesystem::path>& checkpoint) {
            EmbedderConfig config;
            config.backbone_id = backbone;
            config.input_size = input_size;
            config.feature_dim = feature_dim;
            config.checkpoint = checkpoint;
            return std::shared_ptr<Embedder>(make_embedder(config));
        },
        py::arg("backbone") = "grid-mean", py::arg("input_size") = 32,
        py::arg("feature_dim") = 64, py::arg("checkpoint") = std::nullopt);

    m.def("similarity", &similarity, py::arg("a"), py::arg("b"),
          "cosine similarity in [-1, 1]");

    m.def("augment", &augment, py::arg("patch"),
          "the 8 rotations by multiples of 45 degrees (index 0 = identity)");

    m.def("extract_patch", &extract_patch, py::arg("image"),
          py::arg("annotation"));

    m.def("parse_gallery_folder", &parse_gallery_folder, py::arg("root"));
    m.def("parse_bop_scene", &parse_bop_scene, py::arg("scene_dir"));

    m.def(
        "build_cache",
        [](const GallerySet& gallery, const std::shared_ptr<Embedder>& embedder,
           int threads) { return build_cache(gallery, *embedder, threads); },
        py::arg("gallery"), py::arg("embedder"), py::arg("threads") = 0);
    m.def(
        "ensure_cache",
        [](const GallerySet& gallery, std::optional<FeatureCache> existing,
           const std::shared_ptr<Embedder>& embedder, int threads) {
            EnsureResult r = ensure_cache(gallery, std::move(existing),
                                          *embedder, threads);
            return py::make_tuple(std::move(r.cache), r.rebuilt);
        },
        py::arg("gallery"), py::arg("existing"), py::arg("embedder"),
        py::arg("threads") = 0);

    m.def("save_gallery", &save_gallery, py::arg("gallery"), py::arg("path"));
    m.def("load_gallery", &load_gallery, py::arg("path"));
    m.def("save_cache", &save_cache, py::arg("cache"), py::arg("path"));
    m.def("load_cache", &load_cache, py::arg("path"));

    m.def(
        "match_patch",
        [](const Eigen::VectorXf& embedding, const FeatureCache& cache,
           const std::string& strategy, double unknown_threshold,
           bool closed_set) {
            const MatchResult r = match_patch(
                embedding, cache,
                make_strategy(strategy, unknown_threshold, closed_set));
            return py::make_tuple(r.object_id, r.similarity);
        },
        py::arg("embedding"), py::arg("cache"), py::arg("strategy") = "closest",
        py::arg("unknown_threshold") = 0.5, py::arg("closed_set") = false);

    m.def(
        "detect",
        [](const SceneImage& scene, const GallerySet& gallery,
           const FeatureCache& cache, const std::shared_ptr<Embedder>& embedder,
           const std::string& strategy, double unknown_threshold,
           bool closed_set, int min_area, double max_overlap_iou) {
            const OracleSegmenter segmenter;
            DetectOptions options;
            options.min_area = min_area;
            options.max_overlap_iou = max_overlap_iou;
            return detect(scene, gallery, cache, segmenter, *embedder,
                          make_strategy(strategy, unknown_threshold, closed_set),
                          options);
        },
        py::arg("scene"), py::arg("gallery"), py::arg("cache"),
        py::arg("embedder"), py::arg("strategy") = "closest",
        py::arg("unknown_threshold") = 0.5, py::arg("closed_set") = false,
        py::arg("min_area") = 50, py::arg("max_overlap_iou") = 0.9,
        "full pipeline on one annotated scene with the oracle segmenter");

    m.def(
        "evaluate_cmc",
        [](const std::vector<std::tuple<std::string, std::string,
                                        Eigen::VectorXf>>& queries,
           const FeatureCache& cache) {
            std::vector<QueryEmbedding> qs;
            qs.reserve(queries.size());
            for (const auto& [id, cls, vec] : queries) {
                qs.push_back(QueryEmbedding{id, cls, vec});
            }
            const CmcReport report = cmc_evaluate(rank_queries(qs, cache));
            py::dict out;
            out["mAP"] = report.mean_ap;
            for (const int k : kCmcRanks) {
                out[("R" + std::to_string(k)).c_str()] = report.rank_k.at(k);
            }
            out["num_queries"] = report.num_queries;
            out["num_excluded"] = report.num_excluded;
            return out;
        },
        py::arg("queries"), py::arg("cache"),
        "queries: list of (query_id, query_class, embedding)");

    m.def(
        "evaluate_detections",
        [](const std::vector<SceneImage>& scenes,
           const std::filesystem::path& records_path) {
            const CocoDataset data =
                make_coco_input(scenes, read_detection_records(records_path));
            const DetectionReport report = coco_evaluate(data);
            const auto task = [](const TaskMetrics& t) {
                py::dict d;
                d["mAP"] = t.map;
                d["AP50"] = t.ap50;
                d["AP75"] = t.ap75;
                d["AR"] = t.ar;
                return d;
            };
            py::dict out;
            out["bbox"] = task(report.bbox);
            out["segm"] = task(report.segm);
            out["num_images"] = report.num_images;
            return out;
        },
        py::arg("scenes"), py::arg("records_path"));

    m.attr("UNKNOWN") = kUnknownId;
    m.attr("AUGMENTATIONS") = kAugmentations;
}
