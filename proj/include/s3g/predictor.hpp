#ifndef S3G_PREDICTOR_HPP
#define S3G_PREDICTOR_HPP

#include <random>

#include "s3g/common.hpp"

namespace s3g {

struct PredictorParams {
    Matrix gnn_weight;  // D x D
    Vector gnn_bias;    // D
    Matrix ffn_w1;      // D x Dh
    Vector ffn_b1;      // Dh
    Vector ffn_w2;      // Dh
    double ffn_b2 = 0.0;
};

PredictorParams init_predictor_params(Index hidden, Index ffn_hidden, std::mt19937_64& rng);

// D^{-1/2} A D^{-1/2} with D the row-sum degree.
template <typename Derived>
Matrix normalize_adjacency(const Eigen::MatrixBase<Derived>& a) {
    const Vector inv_sqrt = a.rowwise().sum().cwiseSqrt().cwiseInverse();
    return inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal();
}

// dL/dA given dL/dN for N = normalize_adjacency(A).
Matrix normalize_adjacency_backward(const Matrix& a, const Matrix& normalized, const Matrix& d_norm);

inline Matrix relu(const Matrix& m) { return m.cwiseMax(0.0); }

// Z = relu(norm(A) * X * W + b).
Matrix gnn_aggregate(const Matrix& a_hat, const Matrix& node_feats, const PredictorParams& params);

// y_i = w2 . relu(W1^T z_i + b1) + b2.
Vector score(const Matrix& z, const PredictorParams& params);

struct HeadTape {
    Matrix a_norm;
    Matrix node_feats;
    Matrix mixed;   // a_norm * node_feats
    Matrix gnn_pre;
    Matrix z;
    Matrix ffn_pre;
};

Vector head_forward(const Matrix& a_hat, const Matrix& node_feats, const PredictorParams& params,
                    HeadTape* tape);

struct HeadGrads {
    Matrix d_a_hat;
    Matrix d_node_feats;
};

HeadGrads head_backward(const Matrix& a_hat, const HeadTape& tape, const PredictorParams& params,
                        const Vector& d_y, PredictorParams& grad);

}  // namespace s3g

#endif  // S3G_PREDICTOR_HPP
