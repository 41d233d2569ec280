#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "galdet/types.hpp"

namespace galdet {

/// Stage one of the pipeline: class-agnostic instance masks. Proposals
/// deliberately carry no class information.
class Segmenter {
public:
    virtual ~Segmenter() = default;
    virtual std::vector<SegmentProposal> segment(const SceneImage& image) const = 0;
};

/// Returns the scene's ground-truth annotation masks as proposals with
/// confidence 1.0. Needs annotated input scenes.
class OracleSegmenter final : public Segmenter {
public:
    std::vector<SegmentProposal> segment(const SceneImage& image) const override;
};

/// Wraps a serialized instance-segmentation inference graph (two-output
/// detection + mask convention). Load problems surface at construction.
class ModelSegmenter final : public Segmenter {
public:
    explicit ModelSegmenter(const std::filesystem::path& model_path);
    ~ModelSegmenter() override;

    std::vector<SegmentProposal> segment(const SceneImage& image) const override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Drops proposals smaller than min_area, then greedily suppresses any
/// proposal whose mask-IoU with a higher-confidence survivor exceeds
/// max_overlap_iou. Output is ordered by descending confidence.
std::vector<SegmentProposal> filter_proposals(
    std::vector<SegmentProposal> proposals, int min_area,
    double max_overlap_iou);

/// kind is "oracle" or "model"; the model kind requires a graph path.
std::unique_ptr<Segmenter> make_segmenter(
    const std::string& kind, const std::filesystem::path& model_path = {});

}  // namespace galdet
