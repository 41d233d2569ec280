#include "galdet/embedder.hpp"

#include <opencv2/imgproc.hpp>

#include <cmath>

#include "galdet/net.hpp"

namespace galdet {

Eigen::VectorXf GridMeanEmbedder::embed(const ImagePatch& patch) const {
    if (patch.pixels.empty() || patch.pixels.type() != CV_8UC3) {
        throw Error("grid-mean embed: patch pixels must be non-empty 8UC3");
    }
    // Center non-square crops on a square canvas first. Gridding the raw
    // crop would stretch it to the grid's aspect, and a tight 2:1 box
    // around an ellipse becomes indistinguishable from a disc.
    cv::Mat px = patch.pixels;
    if (px.rows != px.cols) {
        const int edge = std::max(px.rows, px.cols);
        cv::Mat canvas = cv::Mat::zeros(edge, edge, CV_8UC3);
        px.copyTo(canvas(cv::Rect((edge - px.cols) / 2, (edge - px.rows) / 2,
                                  px.cols, px.rows)));
        px = canvas;
    }
    Eigen::VectorXf out(kDim);
    // Cell (gy,gx) covers rows [gy*h/8, (gy+1)*h/8) and likewise for
    // columns; cells can be empty for patches smaller than the grid.
    for (int gy = 0; gy < kGrid; ++gy) {
        const int y0 = gy * px.rows / kGrid;
        const int y1 = (gy + 1) * px.rows / kGrid;
        for (int gx = 0; gx < kGrid; ++gx) {
            const int x0 = gx * px.cols / kGrid;
            const int x1 = (gx + 1) * px.cols / kGrid;
            double sum[3] = {0.0, 0.0, 0.0};
            const long long n =
                static_cast<long long>(y1 - y0) * (x1 - x0);
            for (int y = y0; y < y1; ++y) {
                const cv::Vec3b* row = px.ptr<cv::Vec3b>(y);
                for (int x = x0; x < x1; ++x) {
                    sum[0] += row[x][0];
                    sum[1] += row[x][1];
                    sum[2] += row[x][2];
                }
            }
            const int base = (gy * kGrid + gx) * 3;
            for (int c = 0; c < 3; ++c) {
                out[base + c] =
                    n > 0 ? static_cast<float>(sum[c] / static_cast<double>(n))
                          : 0.0f;
            }
        }
    }
    return l2_normalize(out);
}

double l2_norm(const Eigen::VectorXf& v) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        sum += static_cast<double>(v[i]) * static_cast<double>(v[i]);
    }
    return std::sqrt(sum);
}

Eigen::VectorXf l2_normalize(const Eigen::VectorXf& v) {
    const double norm = l2_norm(v);
    if (norm == 0.0) {
        throw Error("l2_normalize: zero vector");
    }
    Eigen::VectorXf out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        out[i] = static_cast<float>(static_cast<double>(v[i]) / norm);
    }
    return out;
}

double similarity(const Eigen::VectorXf& a, const Eigen::VectorXf& b) {
    if (a.size() != b.size()) {
        throw Error("similarity: dimension mismatch (" + std::to_string(a.size()) +
                    " vs " + std::to_string(b.size()) + ")");
    }
    double dot = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) {
        throw Error("similarity: zero vector");
    }
    return dot / (na * nb);
}

cv::Mat resize_letterbox(const cv::Mat& pixels, int size) {
    if (pixels.empty() || size <= 0) {
        throw Error("resize_letterbox: empty input or non-positive size");
    }
    const double scale =
        static_cast<double>(size) / std::max(pixels.cols, pixels.rows);
    int new_w = std::max(1, static_cast<int>(std::round(pixels.cols * scale)));
    int new_h = std::max(1, static_cast<int>(std::round(pixels.rows * scale)));
    new_w = std::min(new_w, size);
    new_h = std::min(new_h, size);
    cv::Mat resized;
    cv::resize(pixels, resized, cv::Size(new_w, new_h), 0, 0, cv::INTER_AREA);
    cv::Mat canvas = cv::Mat::zeros(size, size, pixels.type());
    const int off_x = (size - new_w) / 2;
    const int off_y = (size - new_h) / 2;
    resized.copyTo(canvas(cv::Rect(off_x, off_y, new_w, new_h)));
    return canvas;
}

std::unique_ptr<Embedder> make_embedder(const EmbedderConfig& config) {
    if (config.backbone_id == "grid-mean") {
        return std::make_unique<GridMeanEmbedder>();
    }
    if (config.backbone_id == "tiny") {
        if (!config.checkpoint) {
            throw Error("embedder 'tiny' requires a checkpoint; train one or "
                        "pass embedder.checkpoint");
        }
        return std::make_unique<TinyNetEmbedder>(
            load_checkpoint(*config.checkpoint));
    }
    if (config.backbone_id == "onnx") {
        if (!config.checkpoint) {
            throw Error("embedder 'onnx' requires a model path in "
                        "embedder.checkpoint");
        }
        return make_onnx_embedder(*config.checkpoint, config.input_size);
    }
    throw Error("unknown backbone id: " + config.backbone_id);
}

}  // namespace galdet
