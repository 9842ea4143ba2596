#ifndef S3G_GRAPH_HPP
#define S3G_GRAPH_HPP

#include <cmath>
#include <random>

#include "s3g/common.hpp"

namespace s3g {

// Patch tokens stored slice-major: slices[s] is the N x D token matrix of
// temporal patch s (oldest first).
struct PatchTokens {
    Tensor3 slices;
    int patch_len = 0;

    Index num_slices() const { return static_cast<Index>(slices.size()); }
    Index num_stocks() const { return slices.empty() ? 0 : slices.front().rows(); }
    Index dim() const { return slices.empty() ? 0 : slices.front().cols(); }
};

struct EmbedParams {
    Matrix weight;  // (F*P) x D
    Vector bias;    // D
};

struct SliceGraph {
    Matrix A;
    int slice_index = 0;
};

struct Bandwidth {
    // Median heuristic: sigma^2 = median pairwise squared distance in the slice.
    bool median = true;
    double sigma = 1.0;  // used when !median
};

inline int patch_length(Index lookback, int num_patches) {
    return static_cast<int>(lookback / num_patches);
}

// q[i] is L x F for stock i. Returns n slices, each N x (F*P); row i of slice s
// is stock i's patch s flattened time-major (step p, feature f -> p*F + f).
// The oldest L - n*P steps are dropped.
Tensor3 patch(const Tensor3& q, int num_patches);

PatchTokens embed(const Tensor3& patches, const EmbedParams& params);

EmbedParams random_embed_params(Index in_dim, Index hidden, std::mt19937_64& rng);

// Pairwise squared Euclidean distances between rows.
template <typename Derived>
Matrix pairwise_sq_dist(const Eigen::MatrixBase<Derived>& x) {
    const Index n = x.rows();
    Matrix d = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = (x.row(i) - x.row(j)).squaredNorm();
    return d;
}

// exp(-d / (2 sigma^2)) applied to the off-diagonal of a distance matrix; the
// diagonal is exactly 1 and the result exactly symmetric.
template <typename Derived>
Matrix gaussian_kernel(const Eigen::MatrixBase<Derived>& sq_dist, double sigma_sq) {
    const Index n = sq_dist.rows();
    Matrix a = Matrix::Identity(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j) a(i, j) = a(j, i) = std::exp(-sq_dist(i, j) / (2.0 * sigma_sq));
    return a;
}

SliceGraph gaussian_graph(const Matrix& tokens_slice, double sigma);

// Median of the strict upper triangle of `sq_dist`, with the pair(s) that
// realize it. Falls back to 1.0 (no pairs) when the median is ~0.
struct MedianBandwidth {
    double sigma_sq = 1.0;
    std::vector<std::pair<Index, Index>> pairs;  // 1 (odd count) or 2 (even)
};
MedianBandwidth median_bandwidth(const Matrix& sq_dist);

std::vector<SliceGraph> build_slice_graphs(const PatchTokens& tokens, const Bandwidth& bw);

// Tape for differentiating graph construction of one slice.
struct GraphTape {
    Matrix sq_dist;
    MedianBandwidth bw;
};

SliceGraph gaussian_graph(const Matrix& tokens_slice, const Bandwidth& bw, GraphTape* tape);

// Given dL/dA for the graph built from `tokens_slice`, returns dL/dtokens.
// Differentiates through the median bandwidth when it was used.
Matrix gaussian_graph_backward(const Matrix& tokens_slice, const SliceGraph& graph,
                               const GraphTape& tape, const Bandwidth& bw, const Matrix& d_a);

}  // namespace s3g

#endif  // S3G_GRAPH_HPP
