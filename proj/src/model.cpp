#include "s3g/model.hpp"

#include <cstdio>
#include <random>

namespace s3g {

void ModelConfig::validate() const {
    require(features >= 1, ErrorCode::Config, "model.features must be >= 1");
    require(lookback >= 2, ErrorCode::Config, "model.lookback must be >= 2");
    require(patches >= 1 && patches <= lookback, ErrorCode::Config,
            "model.patches must be in [1, lookback]");
    require(hidden >= 1 && ffn_hidden >= 1, ErrorCode::Config, "model.hidden must be >= 1");
    require(!use_wdn || (kernel_width >= 2 && kernel_width <= lookback), ErrorCode::Config,
            "model.kernel_width must be in [2, lookback]");
    require(bandwidth.median || bandwidth.sigma > 0.0, ErrorCode::Config, "model.sigma must be > 0");
}

std::string ModelConfig::canonical() const {
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "F=%d;L=%d;n=%d;D=%d;Dh=%d;w=%d;sigma=%s%.17g;wdn=%d;ssgl=%d", features,
                  lookback, patches, hidden, ffn_hidden, kernel_width,
                  bandwidth.median ? "median/" : "fixed/", bandwidth.median ? 0.0 : bandwidth.sigma,
                  use_wdn ? 1 : 0, use_ssgl ? 1 : 0);
    return buf;
}

std::uint64_t ModelConfig::fingerprint() const {
    // FNV-1a, stable across platforms and builds.
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : canonical()) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::vector<ParamRef> Model::parameters() {
    std::vector<ParamRef> out;
    auto add = [&](std::string name, auto& m) {
        out.push_back({std::move(name), m.rows(), m.cols(), m.data()});
    };
    if (wdn) {
        add("wdn.weight", wdn->weight);
        add("wdn.bias", wdn->bias);
        out.push_back({"wdn.log_gamma", 1, 1, &wdn->log_gamma});
    }
    add("embed.weight", embed.weight);
    add("embed.bias", embed.bias);
    if (ssm) {
        add("ssm.weight", ssm->weight);
        add("ssm.bias", ssm->bias);
    }
    add("head.gnn_weight", head.gnn_weight);
    add("head.gnn_bias", head.gnn_bias);
    add("head.ffn_w1", head.ffn_w1);
    add("head.ffn_b1", head.ffn_b1);
    add("head.ffn_w2", head.ffn_w2);
    out.push_back({"head.ffn_b2", 1, 1, &head.ffn_b2});
    return out;
}

std::size_t Model::num_parameters() const {
    std::size_t total = 0;
    for (const ParamRef& p : const_cast<Model*>(this)->parameters())
        total += static_cast<std::size_t>(p.rows * p.cols);
    return total;
}

Model init_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    std::mt19937_64 rng(seed);
    Model m;
    m.config = config;
    if (config.use_wdn) m.wdn = haar_wdn_params(config.features, config.kernel_width, 0.01, rng);
    m.embed = random_embed_params(static_cast<Index>(config.features) * config.patch_len(),
                                  config.hidden, rng);
    if (config.use_ssgl) m.ssm = init_ssm_projections(config.hidden, rng);
    m.head = init_predictor_params(config.hidden, config.ffn_hidden, rng);
    return m;
}

Model zeros_like(const Model& like) {
    Model z = like;
    for (ParamRef& p : z.parameters()) p.flat().setZero();
    return z;
}

Vector forward(const Model& model, const Tensor3& x, ForwardTape* tape) {
    const ModelConfig& cfg = model.config;
    require(x.size() >= 2, ErrorCode::Shape, "forward: need at least 2 stocks");
    for (const Matrix& xi : x)
        require(xi.rows() == cfg.lookback && xi.cols() == cfg.features, ErrorCode::Shape,
                "forward: window shape does not match model config");

    ForwardTape local;
    ForwardTape& t = tape ? *tape : local;
    t.x = x;
    t.q = model.wdn ? wdn_forward(x, *model.wdn, &t.wdn) : x;
    t.patches = patch(t.q, cfg.patches);
    t.tokens = embed(t.patches, model.embed);

    const Index slices = t.tokens.num_slices();
    t.graph_tapes.assign(slices, GraphTape{});
    t.graphs.clear();
    for (Index s = 0; s < slices; ++s) {
        SliceGraph g = gaussian_graph(t.tokens.slices[s], cfg.bandwidth, &t.graph_tapes[s]);
        g.slice_index = static_cast<int>(s);
        t.graphs.push_back(std::move(g));
    }
    t.a_hat = model.ssm ? run_ssgl(t.graphs, t.tokens, *model.ssm, &t.ssgl) : ssgl_bypass(t.graphs);
    return head_forward(t.a_hat, t.tokens.slices.back(), model.head, &t.head);
}

Model backward(const Model& model, const ForwardTape& t, const Vector& d_y) {
    const ModelConfig& cfg = model.config;
    Model grad = zeros_like(model);
    HeadGrads hg = head_backward(t.a_hat, t.head, model.head, d_y, grad.head);

    const Index slices = t.tokens.num_slices();
    Tensor3 d_tokens(slices);
    for (Index s = 0; s < slices; ++s) d_tokens[s] = Matrix::Zero(t.tokens.num_stocks(), t.tokens.dim());
    d_tokens.back() += hg.d_node_feats;

    std::vector<Matrix> d_graphs(slices);
    if (model.ssm) {
        SsglGrads sg = ssgl_backward(t.graphs, t.tokens, *model.ssm, t.ssgl, hg.d_a_hat, *grad.ssm);
        for (Index s = 0; s < slices; ++s) d_tokens[s] += sg.d_tokens[s];
        d_graphs = std::move(sg.d_graphs);
    } else {
        d_graphs.back() = hg.d_a_hat;
    }
    for (Index s = 0; s < slices; ++s)
        if (d_graphs[s].size() != 0)
            d_tokens[s] += gaussian_graph_backward(t.tokens.slices[s], t.graphs[s], t.graph_tapes[s],
                                                   cfg.bandwidth, d_graphs[s]);

    // Embedding is shared across slices.
    const Index n = static_cast<Index>(t.q.size());
    const Index len = cfg.lookback;
    const Index f = cfg.features;
    const Index p = cfg.patch_len();
    const Index offset = len - cfg.patches * p;
    Tensor3 d_q(n, Matrix::Zero(len, f));
    for (Index s = 0; s < slices; ++s) {
        grad.embed.weight += t.patches[s].transpose() * d_tokens[s];
        grad.embed.bias += d_tokens[s].colwise().sum().transpose();
        const Matrix d_patch = d_tokens[s] * model.embed.weight.transpose();
        for (Index i = 0; i < n; ++i)
            for (Index step = 0; step < p; ++step)
                d_q[i].row(offset + s * p + step) += d_patch.row(i).segment(step * f, f);
    }
    if (model.wdn) wdn_backward(t.wdn, *model.wdn, d_q, *grad.wdn);
    return grad;
}

}  // namespace s3g
