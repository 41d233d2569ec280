#include "galdet/net.hpp"

#include <opencv2/dnn.hpp>
#include <opencv2/imgproc.hpp>

#include <cmath>
#include <fstream>
#include <mutex>

#include "galdet/binio.hpp"
#include "galdet/hash.hpp"
#include "galdet/rng.hpp"

namespace galdet {

namespace {

constexpr char kCheckpointMagic[9] = "GLDTCKP1";
constexpr uint32_t kCheckpointVersion = 1;

void hash_matrix(Sha256& h, const Eigen::MatrixXf& m) {
    h.update_u64(static_cast<uint64_t>(m.rows()));
    h.update_u64(static_cast<uint64_t>(m.cols()));
    h.update(m.data(), sizeof(float) * static_cast<size_t>(m.size()));
}

void hash_vector(Sha256& h, const Eigen::VectorXf& v) {
    h.update_u64(static_cast<uint64_t>(v.size()));
    h.update(v.data(), sizeof(float) * static_cast<size_t>(v.size()));
}

void write_matrix(BinWriter& w, const Eigen::MatrixXf& m) {
    w.u32(static_cast<uint32_t>(m.rows()));
    w.u32(static_cast<uint32_t>(m.cols()));
    w.f32_block(m.data(), static_cast<size_t>(m.size()));
}

Eigen::MatrixXf read_matrix(BinReader& r) {
    const uint32_t rows = r.u32();
    const uint32_t cols = r.u32();
    if (rows == 0 || cols == 0 || static_cast<uint64_t>(rows) * cols > (1u << 28)) {
        throw Error("checkpoint: implausible matrix shape");
    }
    Eigen::MatrixXf m(rows, cols);
    r.f32_block(m.data(), static_cast<size_t>(m.size()));
    return m;
}

}  // namespace

TinyNetParams init_tiny_net(int input_size, int feature_dim, uint64_t seed) {
    if (input_size <= 0 || feature_dim <= 0) {
        throw Error("init_tiny_net: input_size and feature_dim must be positive");
    }
    TinyNetParams p;
    p.input_size = input_size;
    p.feature_dim = feature_dim;
    const int f = p.input_features();

    Rng rng(seed);
    const float backbone_scale = 1.0f / std::sqrt(static_cast<float>(f));
    const float head_scale = 1.0f / std::sqrt(static_cast<float>(feature_dim));

    p.backbone_w.resize(feature_dim, f);
    for (Eigen::Index i = 0; i < p.backbone_w.size(); ++i) {
        p.backbone_w.data()[i] = rng.uniform_f(-backbone_scale, backbone_scale);
    }
    p.backbone_b = Eigen::VectorXf::Zero(feature_dim);
    p.head_w.resize(feature_dim, feature_dim);
    for (Eigen::Index i = 0; i < p.head_w.size(); ++i) {
        p.head_w.data()[i] = rng.uniform_f(-head_scale, head_scale);
    }
    p.head_b = Eigen::VectorXf::Zero(feature_dim);
    return p;
}

Eigen::VectorXf preprocess_patch(const ImagePatch& patch, int input_size) {
    if (patch.pixels.empty() || patch.pixels.type() != CV_8UC3) {
        throw Error("preprocess_patch: patch pixels must be non-empty 8UC3");
    }
    const cv::Mat canvas = resize_letterbox(patch.pixels, input_size);
    Eigen::VectorXf x(3 * input_size * input_size);
    Eigen::Index i = 0;
    for (int y = 0; y < canvas.rows; ++y) {
        const cv::Vec3b* row = canvas.ptr<cv::Vec3b>(y);
        for (int xpos = 0; xpos < canvas.cols; ++xpos) {
            x[i++] = row[xpos][0] / 255.0f;
            x[i++] = row[xpos][1] / 255.0f;
            x[i++] = row[xpos][2] / 255.0f;
        }
    }
    return x;
}

Eigen::VectorXf tiny_net_forward(const TinyNetParams& params,
                                 const Eigen::VectorXf& x) {
    if (x.size() != params.input_features()) {
        throw Error("tiny_net_forward: input size mismatch");
    }
    const Eigen::VectorXf hidden =
        ((params.backbone_w * x) + params.backbone_b).array().tanh().matrix();
    return params.head_w * hidden + params.head_b;
}

std::string backbone_checksum(const TinyNetParams& params) {
    Sha256 h;
    hash_matrix(h, params.backbone_w);
    hash_vector(h, params.backbone_b);
    return h.hex_digest();
}

std::string params_version(const TinyNetParams& params) {
    Sha256 h;
    h.update_u32(static_cast<uint32_t>(params.input_size));
    h.update_u32(static_cast<uint32_t>(params.feature_dim));
    hash_matrix(h, params.backbone_w);
    hash_vector(h, params.backbone_b);
    hash_matrix(h, params.head_w);
    hash_vector(h, params.head_b);
    return "tiny-" + h.hex_digest().substr(0, 12);
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    atomic_write_file(path, [&](std::ostream& out) {
        BinWriter w(out);
        w.magic(kCheckpointMagic, kCheckpointVersion);
        w.u32(static_cast<uint32_t>(ckpt.params.input_size));
        w.u32(static_cast<uint32_t>(ckpt.params.feature_dim));
        w.str(ckpt.embedder_version);
        w.str(ckpt.meta_json);
        write_matrix(w, ckpt.params.backbone_w);
        w.f32_block(ckpt.params.backbone_b.data(),
                    static_cast<size_t>(ckpt.params.backbone_b.size()));
        write_matrix(w, ckpt.params.head_w);
        w.f32_block(ckpt.params.head_b.data(),
                    static_cast<size_t>(ckpt.params.head_b.size()));
    });
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("checkpoint not found: " + path.string());
    }
    BinReader r(in, path.string());
    r.magic(kCheckpointMagic, kCheckpointVersion);

    Checkpoint ckpt;
    ckpt.params.input_size = static_cast<int>(r.u32());
    ckpt.params.feature_dim = static_cast<int>(r.u32());
    ckpt.embedder_version = r.str();
    ckpt.meta_json = r.str();

    ckpt.params.backbone_w = read_matrix(r);
    ckpt.params.backbone_b.resize(ckpt.params.feature_dim);
    r.f32_block(ckpt.params.backbone_b.data(),
                static_cast<size_t>(ckpt.params.backbone_b.size()));
    ckpt.params.head_w = read_matrix(r);
    ckpt.params.head_b.resize(ckpt.params.feature_dim);
    r.f32_block(ckpt.params.head_b.data(),
                static_cast<size_t>(ckpt.params.head_b.size()));

    if (ckpt.params.backbone_w.rows() != ckpt.params.feature_dim ||
        ckpt.params.backbone_w.cols() != ckpt.params.input_features() ||
        ckpt.params.head_w.rows() != ckpt.params.feature_dim ||
        ckpt.params.head_w.cols() != ckpt.params.feature_dim) {
        throw Error(path.string() + ": checkpoint weight shapes inconsistent");
    }
    return ckpt;
}

TinyNetEmbedder::TinyNetEmbedder(Checkpoint ckpt) : ckpt_(std::move(ckpt)) {
    if (ckpt_.embedder_version.empty()) {
        ckpt_.embedder_version = params_version(ckpt_.params);
    }
}

Eigen::VectorXf TinyNetEmbedder::embed(const ImagePatch& patch) const {
    const Eigen::VectorXf x = preprocess_patch(patch, ckpt_.params.input_size);
    return l2_normalize(tiny_net_forward(ckpt_.params, x));
}

namespace {

class OnnxEmbedder final : public Embedder {
public:
    OnnxEmbedder(const std::filesystem::path& model, int input_size)
        : input_size_(input_size) {
        if (!std::filesystem::exists(model)) {
            throw Error("embedding model not found: " + model.string());
        }
        try {
            net_ = cv::dnn::readNet(model.string());
        } catch (const cv::Exception& e) {
            throw Error("failed to load embedding model " + model.string() +
                        ": " + e.what());
        }
        std::ifstream in(model, std::ios::binary);
        std::string bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
        version_ = "onnx-" + sha256_hex(bytes).substr(0, 12);

        // Probe the output width once with a blank input.
        ImagePatch blank;
        blank.pixels = cv::Mat::zeros(input_size_, input_size_, CV_8UC3);
        dim_ = static_cast<int>(forward(blank).size());
    }

    Eigen::VectorXf embed(const ImagePatch& patch) const override {
        return l2_normalize(forward(patch));
    }

    int dim() const override { return dim_; }
    const std::string& version() const override { return version_; }

private:
    Eigen::VectorXf forward(const ImagePatch& patch) const {
        const cv::Mat canvas = resize_letterbox(patch.pixels, input_size_);
        const cv::Mat blob = cv::dnn::blobFromImage(
            canvas, 1.0 / 255.0, cv::Size(input_size_, input_size_),
            cv::Scalar(), /*swapRB=*/true, /*crop=*/false);
        std::lock_guard<std::mutex> lock(mutex_);  // dnn::Net is not reentrant
        net_.setInput(blob);
        cv::Mat out = net_.forward();
        out = out.reshape(1, 1);
        Eigen::VectorXf v(out.cols);
        for (int i = 0; i < out.cols; ++i) {
            v[i] = out.at<float>(0, i);
        }
        return v;
    }

    int input_size_;
    int dim_ = 0;
    std::string version_;
    mutable cv::dnn::Net net_;
    mutable std::mutex mutex_;
};

}  // namespace

std::unique_ptr<Embedder> make_onnx_embedder(const std::filesystem::path& model,
                                             int input_size) {
    return std::make_unique<OnnxEmbedder>(model, input_size);
}

}  // namespace galdet
