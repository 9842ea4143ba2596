#include "s3g/graph.hpp"

#include <algorithm>
#include <numeric>

namespace s3g {

Tensor3 patch(const Tensor3& q, int num_patches) {
    require(!q.empty(), ErrorCode::Shape, "patch: empty batch");
    const Index len = q.front().rows();
    const Index f = q.front().cols();
    require(num_patches >= 1 && num_patches <= len, ErrorCode::Config,
            "patch count " + std::to_string(num_patches) + " must be in [1, " +
                std::to_string(len) + "]");
    const Index p = patch_length(len, num_patches);
    const Index offset = len - num_patches * p;
    const Index n = static_cast<Index>(q.size());

    Tensor3 slices(num_patches, Matrix(n, f * p));
    for (Index i = 0; i < n; ++i) {
        require(q[i].rows() == len && q[i].cols() == f, ErrorCode::Shape, "patch: ragged batch");
        for (int s = 0; s < num_patches; ++s)
            for (Index step = 0; step < p; ++step)
                slices[s].row(i).segment(step * f, f) = q[i].row(offset + s * p + step);
    }
    return slices;
}

PatchTokens embed(const Tensor3& patches, const EmbedParams& params) {
    PatchTokens tokens;
    tokens.slices.reserve(patches.size());
    for (const Matrix& s : patches) {
        require(s.cols() == params.weight.rows(), ErrorCode::Config,
                "embed: patch width " + std::to_string(s.cols()) + " does not match weight rows " +
                    std::to_string(params.weight.rows()));
        require(params.bias.size() == params.weight.cols(), ErrorCode::Config,
                "embed: bias size does not match hidden dim");
        Matrix t = s * params.weight;
        t.rowwise() += params.bias.transpose();
        tokens.slices.push_back(std::move(t));
    }
    if (!patches.empty()) tokens.patch_len = static_cast<int>(patches.front().cols());
    return tokens;
}

EmbedParams random_embed_params(Index in_dim, Index hidden, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(in_dim)));
    EmbedParams p;
    p.weight = Matrix::NullaryExpr(in_dim, hidden, [&] { return dist(rng); });
    p.bias = Vector::Zero(hidden);
    return p;
}

SliceGraph gaussian_graph(const Matrix& tokens_slice, double sigma) {
    require(sigma > 0.0, ErrorCode::Config, "gaussian_graph: sigma must be > 0");
    require(tokens_slice.rows() >= 2, ErrorCode::Config, "gaussian_graph: need at least 2 stocks");
    return {gaussian_kernel(pairwise_sq_dist(tokens_slice), sigma * sigma), 0};
}

MedianBandwidth median_bandwidth(const Matrix& sq_dist) {
    const Index n = sq_dist.rows();
    std::vector<std::pair<Index, Index>> pairs;
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    MedianBandwidth out;
    if (pairs.empty()) return out;
    // Stable order on (distance, i, j) keeps the chosen pair deterministic.
    std::sort(pairs.begin(), pairs.end(), [&](const auto& a, const auto& b) {
        const double da = sq_dist(a.first, a.second), db = sq_dist(b.first, b.second);
        return da != db ? da < db : a < b;
    });
    const std::size_t m = pairs.size();
    if (m % 2 == 1) {
        out.pairs = {pairs[m / 2]};
    } else {
        out.pairs = {pairs[m / 2 - 1], pairs[m / 2]};
    }
    double med = 0.0;
    for (auto [i, j] : out.pairs) med += sq_dist(i, j);
    med /= static_cast<double>(out.pairs.size());
    if (med <= 1e-12) {
        out.sigma_sq = 1.0;
        out.pairs.clear();
    } else {
        out.sigma_sq = med;
    }
    return out;
}

SliceGraph gaussian_graph(const Matrix& tokens_slice, const Bandwidth& bw, GraphTape* tape) {
    require(tokens_slice.rows() >= 2, ErrorCode::Config, "gaussian_graph: need at least 2 stocks");
    require(bw.median || bw.sigma > 0.0, ErrorCode::Config, "gaussian_graph: sigma must be > 0");
    Matrix d = pairwise_sq_dist(tokens_slice);
    MedianBandwidth med;
    if (bw.median)
        med = median_bandwidth(d);
    else
        med.sigma_sq = bw.sigma * bw.sigma;
    SliceGraph g{gaussian_kernel(d, med.sigma_sq), 0};
    if (tape) {
        tape->sq_dist = std::move(d);
        tape->bw = std::move(med);
    }
    return g;
}

std::vector<SliceGraph> build_slice_graphs(const PatchTokens& tokens, const Bandwidth& bw) {
    std::vector<SliceGraph> graphs;
    graphs.reserve(tokens.slices.size());
    for (Index s = 0; s < tokens.num_slices(); ++s) {
        SliceGraph g = gaussian_graph(tokens.slices[s], bw, nullptr);
        g.slice_index = static_cast<int>(s);
        graphs.push_back(std::move(g));
    }
    return graphs;
}

Matrix gaussian_graph_backward(const Matrix& tokens_slice, const SliceGraph& graph,
                               const GraphTape& tape, const Bandwidth& bw, const Matrix& d_a) {
    const Index n = tokens_slice.rows();
    const double s = tape.bw.sigma_sq;
    const Matrix& a = graph.A;
    // Gradient per unordered pair with respect to its squared distance.
    Matrix w = Matrix::Zero(n, n);
    double d_s = 0.0;
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) {
            const double g = d_a(i, j) + d_a(j, i);
            w(i, j) = -g * a(i, j) / (2.0 * s);
            d_s += g * a(i, j) * tape.sq_dist(i, j) / (2.0 * s * s);
        }
    if (bw.median && !tape.bw.pairs.empty()) {
        const double share = d_s / static_cast<double>(tape.bw.pairs.size());
        for (auto [i, j] : tape.bw.pairs) w(i, j) += share;
    }
    w = (w + w.transpose()).eval();
    const Vector deg = w.rowwise().sum();
    return 2.0 * (deg.asDiagonal() * tokens_slice - w * tokens_slice);
}

}  // namespace s3g
