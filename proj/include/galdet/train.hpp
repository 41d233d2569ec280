#pragma once

#include <Eigen/Core>

#include <string>
#include <vector>

#include "galdet/ingest.hpp"
#include "galdet/net.hpp"
#include "galdet/rng.hpp"
#include "galdet/types.hpp"

namespace galdet {

struct TrainConfig {
    int epochs = 10;
    int freeze_backbone_epochs = 1;
    double positive_fraction = 0.5;
    int batch_size = 64;
    double learning_rate = 1e-4;
    /// 0 = derive from dataset size (about 4 passes over the patches).
    int steps_per_epoch = 0;
    /// Rotate each sampled patch by a random multiple of 45 degrees,
    /// the same augmentation the gallery cache uses.
    bool augment_rotations = true;
    uint64_t seed = 0;
};

struct SampledPair {
    const ImagePatch* query = nullptr;
    const ImagePatch* gallery = nullptr;
    int query_rotation = 0;
    int gallery_rotation = 0;
    float target = 0.0f;  // 1 = same class, 0 = different
};

/// Draws (query, gallery, target) pairs: with probability
/// positive_fraction two distinct patches of one class (target 1),
/// otherwise one patch from each of two distinct classes (target 0).
class PairSampler {
public:
    PairSampler(const ClassDataset& dataset, double positive_fraction,
                bool rotate);

    SampledPair sample(Rng& rng) const;

    size_t num_classes() const { return classes_.size(); }
    size_t num_patches() const { return num_patches_; }

private:
    struct ClassRef {
        std::string object_id;
        const std::vector<ImagePatch>* patches;
    };
    std::vector<ClassRef> classes_;
    std::vector<size_t> multi_patch_classes_;  // indices with >= 2 patches
    size_t num_patches_ = 0;
    double positive_fraction_;
    bool rotate_;
};

struct StepRecord {
    int epoch = 0;
    int step = 0;
    double loss = 0.0;
};

struct TrainResult {
    TinyNetParams params;
    std::string embedder_version;
    std::vector<double> epoch_loss;  // mean batch loss per epoch
    std::vector<StepRecord> steps;
};

/// Trains the shared-weight network on sampled pairs: cosine similarity
/// mapped to [0,1] regressed onto the pair target with squared error,
/// adaptive-moment updates, backbone held fixed for the first
/// freeze_backbone_epochs epochs. Non-finite loss aborts naming the
/// epoch and step. epochs = 0 returns the initialization untouched.
TrainResult train(const ClassDataset& dataset, const TrainConfig& config,
                  TinyNetParams init);

namespace detail {

/// Loss and parameter gradients for a single pair, all in double: the
/// reference math the finite-difference tests probe.
struct PairGrads {
    double loss = 0.0;
    Eigen::MatrixXd d_backbone_w;
    Eigen::VectorXd d_backbone_b;
    Eigen::MatrixXd d_head_w;
    Eigen::VectorXd d_head_b;
};

PairGrads pair_loss_and_grads(const Eigen::MatrixXd& backbone_w,
                              const Eigen::VectorXd& backbone_b,
                              const Eigen::MatrixXd& head_w,
                              const Eigen::VectorXd& head_b,
                              const Eigen::VectorXd& query_x,
                              const Eigen::VectorXd& gallery_x, double target);

}  // namespace detail

}  // namespace galdet
