#include "galdet/train.hpp"

#include <cmath>

#include "galdet/gallery.hpp"

namespace galdet {

PairSampler::PairSampler(const ClassDataset& dataset, double positive_fraction,
                         bool rotate)
    : positive_fraction_(positive_fraction), rotate_(rotate) {
    if (!(positive_fraction > 0.0 && positive_fraction < 1.0)) {
        throw Error("positive_fraction must lie strictly between 0 and 1");
    }
    for (const auto& [object_id, patches] : dataset) {
        if (patches.empty()) {
            throw Error("pair sampling: class '" + object_id +
                        "' has no patches");
        }
        if (patches.size() >= 2) {
            multi_patch_classes_.push_back(classes_.size());
        }
        num_patches_ += patches.size();
        classes_.push_back(ClassRef{object_id, &patches});
    }
    if (classes_.size() < 2) {
        throw Error(
            "pair sampling needs at least 2 classes (negatives impossible)");
    }
    if (multi_patch_classes_.empty()) {
        throw Error(
            "pair sampling: no class has 2 or more patches (positives "
            "impossible)");
    }
}

SampledPair PairSampler::sample(Rng& rng) const {
    SampledPair pair;
    const bool positive = rng.uniform() < positive_fraction_;
    if (positive) {
        const size_t c = multi_patch_classes_[rng.bounded(
            static_cast<uint32_t>(multi_patch_classes_.size()))];
        const auto& patches = *classes_[c].patches;
        const uint32_t n = static_cast<uint32_t>(patches.size());
        const uint32_t i = rng.bounded(n);
        uint32_t j = rng.bounded(n - 1);
        if (j >= i) {
            ++j;  // never the same patch twice
        }
        pair.query = &patches[i];
        pair.gallery = &patches[j];
        pair.target = 1.0f;
    } else {
        const uint32_t num = static_cast<uint32_t>(classes_.size());
        const uint32_t c1 = rng.bounded(num);
        uint32_t c2 = rng.bounded(num - 1);
        if (c2 >= c1) {
            ++c2;
        }
        const auto& patches1 = *classes_[c1].patches;
        const auto& patches2 = *classes_[c2].patches;
        pair.query = &patches1[rng.bounded(static_cast<uint32_t>(patches1.size()))];
        pair.gallery =
            &patches2[rng.bounded(static_cast<uint32_t>(patches2.size()))];
        pair.target = 0.0f;
    }
    if (rotate_) {
        pair.query_rotation = static_cast<int>(rng.bounded(kAugmentations));
        pair.gallery_rotation = static_cast<int>(rng.bounded(kAugmentations));
    }
    return pair;
}

namespace detail {

PairGrads pair_loss_and_grads(const Eigen::MatrixXd& backbone_w,
                              const Eigen::VectorXd& backbone_b,
                              const Eigen::MatrixXd& head_w,
                              const Eigen::VectorXd& head_b,
                              const Eigen::VectorXd& query_x,
                              const Eigen::VectorXd& gallery_x, double target) {
    const Eigen::VectorXd hq =
        (backbone_w * query_x + backbone_b).array().tanh();
    const Eigen::VectorXd hg =
        (backbone_w * gallery_x + backbone_b).array().tanh();
    const Eigen::VectorXd u = head_w * hq + head_b;
    const Eigen::VectorXd v = head_w * hg + head_b;

    // Guard against an exactly-zero branch output; cosine is undefined
    // there and the clamp keeps the step finite instead of NaN-aborting.
    const double nu = std::max(u.norm(), 1e-12);
    const double nv = std::max(v.norm(), 1e-12);
    const double s = u.dot(v) / (nu * nv);
    const double mapped = (s + 1.0) / 2.0;

    PairGrads out;
    out.loss = (mapped - target) * (mapped - target);

    // d loss / d s = 2 (mapped - target) * 1/2
    const double ds = mapped - target;
    const Eigen::VectorXd du = ds * (v / (nu * nv) - (s / (nu * nu)) * u);
    const Eigen::VectorXd dv = ds * (u / (nu * nv) - (s / (nv * nv)) * v);

    out.d_head_w = du * hq.transpose() + dv * hg.transpose();
    out.d_head_b = du + dv;

    const Eigen::VectorXd dhq = head_w.transpose() * du;
    const Eigen::VectorXd dhg = head_w.transpose() * dv;
    const Eigen::VectorXd dzq =
        dhq.array() * (1.0 - hq.array() * hq.array());
    const Eigen::VectorXd dzg =
        dhg.array() * (1.0 - hg.array() * hg.array());

    out.d_backbone_w = dzq * query_x.transpose() + dzg * gallery_x.transpose();
    out.d_backbone_b = dzq + dzg;
    return out;
}

}  // namespace detail

namespace {

/// One parameter tensor under adaptive-moment updates. The step counter
/// is per-tensor so a frozen backbone resumes from t=0 bias correction.
struct AdamState {
    Eigen::MatrixXd m;
    Eigen::MatrixXd v;
    long t = 0;

    explicit AdamState(Eigen::Index rows, Eigen::Index cols)
        : m(Eigen::MatrixXd::Zero(rows, cols)),
          v(Eigen::MatrixXd::Zero(rows, cols)) {}

    void step(Eigen::Ref<Eigen::MatrixXd> param, const Eigen::MatrixXd& grad,
              double lr) {
        constexpr double beta1 = 0.9;
        constexpr double beta2 = 0.999;
        constexpr double eps = 1e-8;
        ++t;
        m = beta1 * m + (1.0 - beta1) * grad;
        v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        param -= (lr / bc1) * m.cwiseQuotient(
                     ((v / bc2).cwiseSqrt().array() + eps).matrix());
    }
};

Eigen::VectorXd preprocess_rotated(const ImagePatch& patch, int rotation,
                                   int input_size) {
    if (rotation == 0) {
        return preprocess_patch(patch, input_size).cast<double>();
    }
    ImagePatch rotated;
    rotated.pixels = rotate_patch(patch.pixels, rotation);
    return preprocess_patch(rotated, input_size).cast<double>();
}

}  // namespace

TrainResult train(const ClassDataset& dataset, const TrainConfig& config,
                  TinyNetParams init) {
    if (config.epochs < 0) {
        throw Error("epochs must be >= 0");
    }
    if (config.batch_size < 1) {
        throw Error("batch_size must be >= 1");
    }
    if (!(config.learning_rate > 0.0)) {
        throw Error("learning_rate must be positive");
    }
    if (config.steps_per_epoch < 0) {
        throw Error("steps_per_epoch must be >= 0 (0 = derive from dataset)");
    }
    if (init.input_size <= 0 || init.feature_dim <= 0) {
        throw Error("train: uninitialized network parameters");
    }

    TrainResult result;
    if (config.epochs == 0) {
        result.params = std::move(init);
        result.embedder_version = params_version(result.params);
        return result;
    }
    if (config.freeze_backbone_epochs < 0 ||
        config.freeze_backbone_epochs > config.epochs) {
        throw Error("freeze_backbone_epochs must lie in [0, epochs]");
    }

    const PairSampler sampler(dataset, config.positive_fraction,
                              config.augment_rotations);
    const int steps_per_epoch =
        config.steps_per_epoch > 0
            ? config.steps_per_epoch
            : std::max<int>(1, static_cast<int>((4 * sampler.num_patches() +
                                                 config.batch_size - 1) /
                                                config.batch_size));

    // Master weights in double; cast back to float once at the end.
    Eigen::MatrixXd backbone_w = init.backbone_w.cast<double>();
    Eigen::MatrixXd backbone_b = init.backbone_b.cast<double>();
    Eigen::MatrixXd head_w = init.head_w.cast<double>();
    Eigen::MatrixXd head_b = init.head_b.cast<double>();

    AdamState opt_bw(backbone_w.rows(), backbone_w.cols());
    AdamState opt_bb(backbone_b.rows(), 1);
    AdamState opt_hw(head_w.rows(), head_w.cols());
    AdamState opt_hb(head_b.rows(), 1);

    Rng rng(config.seed);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const bool backbone_frozen = epoch < config.freeze_backbone_epochs;
        double epoch_sum = 0.0;
        for (int step = 0; step < steps_per_epoch; ++step) {
            Eigen::MatrixXd g_bw = Eigen::MatrixXd::Zero(backbone_w.rows(),
                                                         backbone_w.cols());
            Eigen::VectorXd g_bb = Eigen::VectorXd::Zero(backbone_b.rows());
            Eigen::MatrixXd g_hw =
                Eigen::MatrixXd::Zero(head_w.rows(), head_w.cols());
            Eigen::VectorXd g_hb = Eigen::VectorXd::Zero(head_b.rows());
            double batch_loss = 0.0;

            for (int b = 0; b < config.batch_size; ++b) {
                const SampledPair pair = sampler.sample(rng);
                const Eigen::VectorXd xq = preprocess_rotated(
                    *pair.query, pair.query_rotation, init.input_size);
                const Eigen::VectorXd xg = preprocess_rotated(
                    *pair.gallery, pair.gallery_rotation, init.input_size);
                const detail::PairGrads g = detail::pair_loss_and_grads(
                    backbone_w, backbone_b, head_w, head_b, xq, xg,
                    pair.target);
                batch_loss += g.loss;
                g_bw += g.d_backbone_w;
                g_bb += g.d_backbone_b;
                g_hw += g.d_head_w;
                g_hb += g.d_head_b;
            }

            const double scale = 1.0 / config.batch_size;
            batch_loss *= scale;
            if (!std::isfinite(batch_loss)) {
                throw Error("training diverged (non-finite loss) at epoch " +
                            std::to_string(epoch) + " step " +
                            std::to_string(step));
            }
            epoch_sum += batch_loss;
            result.steps.push_back(StepRecord{epoch, step, batch_loss});

            opt_hw.step(head_w, g_hw * scale, config.learning_rate);
            opt_hb.step(head_b, g_hb * scale, config.learning_rate);
            if (!backbone_frozen) {
                opt_bw.step(backbone_w, g_bw * scale, config.learning_rate);
                opt_bb.step(backbone_b, g_bb * scale, config.learning_rate);
            }
        }
        result.epoch_loss.push_back(epoch_sum / steps_per_epoch);
    }

    result.params = std::move(init);
    result.params.backbone_w = backbone_w.cast<float>();
    result.params.backbone_b = backbone_b.col(0).cast<float>();
    result.params.head_w = head_w.cast<float>();
    result.params.head_b = head_b.col(0).cast<float>();
    result.embedder_version = params_version(result.params);
    return result;
}

}  // namespace galdet
