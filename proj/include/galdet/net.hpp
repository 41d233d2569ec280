#pragma once

#include <Eigen/Core>

#include <filesystem>
#include <memory>
#include <string>

#include "galdet/embedder.hpp"
#include "galdet/types.hpp"

namespace galdet {

/// Weights of the small trainable embedding network: a one-layer image
/// backbone (flattened letterboxed pixels -> tanh features) followed by a
/// linear projection of equal input/output width. Query and gallery
/// branches share these weights; there is exactly one copy.
struct TinyNetParams {
    int input_size = 0;   // square model input edge
    int feature_dim = 0;  // width of both the backbone output and the head

    Eigen::MatrixXf backbone_w;  // feature_dim x (3 * input_size^2)
    Eigen::VectorXf backbone_b;  // feature_dim
    Eigen::MatrixXf head_w;      // feature_dim x feature_dim
    Eigen::VectorXf head_b;      // feature_dim

    int input_features() const { return 3 * input_size * input_size; }
};

TinyNetParams init_tiny_net(int input_size, int feature_dim, uint64_t seed);

/// Letterbox to the model input size, scale to [0,1], flatten in
/// (row, column, channel) order.
Eigen::VectorXf preprocess_patch(const ImagePatch& patch, int input_size);

/// Raw (unnormalized) projection output for a preprocessed input.
Eigen::VectorXf tiny_net_forward(const TinyNetParams& params,
                                 const Eigen::VectorXf& x);

/// Digest of the backbone weights only; unchanged while the backbone is
/// frozen during training.
std::string backbone_checksum(const TinyNetParams& params);

/// Digest-derived identity of the full parameter set, used as the
/// embedder version so caches invalidate when weights change.
std::string params_version(const TinyNetParams& params);

struct Checkpoint {
    TinyNetParams params;
    std::string embedder_version;
    /// Free-form metadata (optimizer settings, seed, epochs); stored for
    /// reproducibility, not interpreted on load.
    std::string meta_json;
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

class TinyNetEmbedder final : public Embedder {
public:
    explicit TinyNetEmbedder(Checkpoint ckpt);

    Eigen::VectorXf embed(const ImagePatch& patch) const override;
    int dim() const override { return ckpt_.params.feature_dim; }
    const std::string& version() const override { return ckpt_.embedder_version; }

    const TinyNetParams& params() const { return ckpt_.params; }

private:
    Checkpoint ckpt_;
};

/// Wraps an exported inference graph (ONNX and anything else OpenCV's dnn
/// module reads) as an embedder. Loading errors surface at construction.
std::unique_ptr<Embedder> make_onnx_embedder(const std::filesystem::path& model,
                                             int input_size);

}  // namespace galdet
