#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "galdet/types.hpp"

namespace galdet {

struct EmbedderConfig {
    /// One of "grid-mean", "tiny", "onnx".
    std::string backbone_id = "grid-mean";
    /// Square model input edge; patches are letterbox-resized to it.
    int input_size = 32;
    /// Projection width for learned backbones. grid-mean is fixed at 192.
    int feature_dim = 64;
    std::optional<std::filesystem::path> checkpoint;
};

/// Maps masked object crops to unit-norm feature vectors. Implementations
/// are stateless after construction; concurrent embed calls are safe.
class Embedder {
public:
    virtual ~Embedder() = default;

    /// Unit-norm feature vector, deterministic for fixed weights and input.
    virtual Eigen::VectorXf embed(const ImagePatch& patch) const = 0;
    virtual int dim() const = 0;
    /// Identity string mixed into cache keys; changes whenever the
    /// weights change.
    virtual const std::string& version() const = 0;
};

/// Non-learned reference embedder: the patch is divided into an 8x8 grid
/// and each cell contributes its per-channel mean, giving a 192-dim
/// vector. Exists so the full pipeline and every metric can run without
/// any checkpoint.
class GridMeanEmbedder final : public Embedder {
public:
    static constexpr int kGrid = 8;
    static constexpr int kDim = kGrid * kGrid * 3;

    Eigen::VectorXf embed(const ImagePatch& patch) const override;
    int dim() const override { return kDim; }
    const std::string& version() const override { return version_; }

private:
    std::string version_ = "grid-mean-v1";
};

/// Cosine similarity in [-1, 1]. Accumulates in double with a fixed
/// summation order so results are reproducible bit-for-bit.
double similarity(const Eigen::VectorXf& a, const Eigen::VectorXf& b);

double l2_norm(const Eigen::VectorXf& v);

/// Errors on the zero vector.
Eigen::VectorXf l2_normalize(const Eigen::VectorXf& v);

/// Aspect-preserving resize onto a size x size canvas, centered, padded
/// with background (0,0,0).
cv::Mat resize_letterbox(const cv::Mat& pixels, int size);

/// Builds the embedder named by the config. Learned backbones require a
/// checkpoint and error without one.
std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& config);

}  // namespace galdet
