#ifndef S3G_MODEL_HPP
#define S3G_MODEL_HPP

#include <cstdint>
#include <optional>
#include <string>

#include "s3g/common.hpp"
#include "s3g/graph.hpp"
#include "s3g/predictor.hpp"
#include "s3g/ssgl.hpp"
#include "s3g/wdn.hpp"

namespace s3g {

struct ModelConfig {
    int features = 6;
    int lookback = 20;
    int patches = 4;
    int hidden = 16;
    int ffn_hidden = 16;
    int kernel_width = 4;
    Bandwidth bandwidth;
    bool use_wdn = true;
    bool use_ssgl = true;

    int patch_len() const { return patch_length(lookback, patches); }
    void validate() const;
    // Canonical text of every field that affects parameter shapes or the
    // forward computation.
    std::string canonical() const;
    std::uint64_t fingerprint() const;
};

// Mutable view of one named parameter tensor (column-major data).
struct ParamRef {
    std::string name;
    Index rows;
    Index cols;
    double* data;

    Eigen::Map<Vector> flat() const { return {data, rows * cols}; }
};

struct Model {
    ModelConfig config;
    std::optional<WdnParams> wdn;
    EmbedParams embed;
    std::optional<SsmProjections> ssm;
    PredictorParams head;

    // Fixed order: wdn.*, embed.*, ssm.*, head.*.
    std::vector<ParamRef> parameters();
    std::size_t num_parameters() const;
};

Model init_model(const ModelConfig& config, std::uint64_t seed);
// Same structure as `like`, every entry zero. Used as a gradient accumulator.
Model zeros_like(const Model& like);

struct ForwardTape {
    Tensor3 x;
    WdnTape wdn;
    Tensor3 q;
    Tensor3 patches;
    PatchTokens tokens;
    std::vector<GraphTape> graph_tapes;
    std::vector<SliceGraph> graphs;
    SsglTape ssgl;
    Matrix a_hat;
    HeadTape head;
};

// x[i] is the L x F window of stock i. Returns one score per stock.
Vector forward(const Model& model, const Tensor3& x, ForwardTape* tape = nullptr);

// Gradient of a scalar loss given dL/dy for the forward pass recorded in `tape`.
Model backward(const Model& model, const ForwardTape& tape, const Vector& d_y);

}  // namespace s3g

#endif  // S3G_MODEL_HPP
