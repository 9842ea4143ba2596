#include "s3g/predictor.hpp"

namespace s3g {

PredictorParams init_predictor_params(Index hidden, Index ffn_hidden, std::mt19937_64& rng) {
    auto he = [&](Index rows, Index cols, Index fan_in) {
        std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
        return Matrix(Matrix::NullaryExpr(rows, cols, [&] { return dist(rng); }));
    };
    PredictorParams p;
    p.gnn_weight = he(hidden, hidden, hidden);
    p.gnn_bias = Vector::Constant(hidden, 0.01);
    p.ffn_w1 = he(hidden, ffn_hidden, hidden);
    p.ffn_b1 = Vector::Constant(ffn_hidden, 0.01);
    // Small output layer so initial scores sit near the scale of daily returns.
    p.ffn_w2 = 0.01 * he(ffn_hidden, 1, ffn_hidden).col(0);
    p.ffn_b2 = 0.0;
    return p;
}

Matrix normalize_adjacency_backward(const Matrix& a, const Matrix& normalized, const Matrix& d_norm) {
    const Vector deg = a.rowwise().sum();
    const Vector inv_sqrt = deg.cwiseSqrt().cwiseInverse();
    Matrix d_a = inv_sqrt.asDiagonal() * d_norm * inv_sqrt.asDiagonal();
    // N_ij depends on deg_i and deg_j with dN_ij/ddeg_k = -N_ij / (2 deg_k).
    const Matrix gn = d_norm.cwiseProduct(normalized);
    const Vector d_deg =
        (-0.5 * (gn.rowwise().sum() + gn.colwise().sum().transpose()).array() / deg.array()).matrix();
    d_a.colwise() += d_deg;
    return d_a;
}

Matrix gnn_aggregate(const Matrix& a_hat, const Matrix& node_feats, const PredictorParams& params) {
    require(a_hat.rows() == node_feats.rows() && a_hat.cols() == a_hat.rows(), ErrorCode::Config,
            "gnn_aggregate: adjacency does not match node count");
    require(node_feats.cols() == params.gnn_weight.rows(), ErrorCode::Config,
            "gnn_aggregate: feature dim does not match weight");
    Matrix pre = normalize_adjacency(a_hat) * node_feats * params.gnn_weight;
    pre.rowwise() += params.gnn_bias.transpose();
    return relu(pre);
}

Vector score(const Matrix& z, const PredictorParams& params) {
    Matrix hidden = z * params.ffn_w1;
    hidden.rowwise() += params.ffn_b1.transpose();
    return (relu(hidden) * params.ffn_w2).array() + params.ffn_b2;
}

Vector head_forward(const Matrix& a_hat, const Matrix& node_feats, const PredictorParams& params,
                    HeadTape* tape) {
    require(a_hat.rows() == node_feats.rows(), ErrorCode::Config,
            "predictor: adjacency does not match node count");
    HeadTape local;
    HeadTape& t = tape ? *tape : local;
    t.a_norm = normalize_adjacency(a_hat);
    t.node_feats = node_feats;
    t.mixed = t.a_norm * node_feats;
    t.gnn_pre = t.mixed * params.gnn_weight;
    t.gnn_pre.rowwise() += params.gnn_bias.transpose();
    t.z = relu(t.gnn_pre);
    t.ffn_pre = t.z * params.ffn_w1;
    t.ffn_pre.rowwise() += params.ffn_b1.transpose();
    return (relu(t.ffn_pre) * params.ffn_w2).array() + params.ffn_b2;
}

HeadGrads head_backward(const Matrix& a_hat, const HeadTape& t, const PredictorParams& params,
                        const Vector& d_y, PredictorParams& grad) {
    const Matrix hidden = relu(t.ffn_pre);
    grad.ffn_b2 += d_y.sum();
    grad.ffn_w2 += hidden.transpose() * d_y;
    const Matrix d_ffn_pre =
        ((d_y * params.ffn_w2.transpose()).array() * (t.ffn_pre.array() > 0.0).cast<double>()).matrix();
    grad.ffn_w1 += t.z.transpose() * d_ffn_pre;
    grad.ffn_b1 += d_ffn_pre.colwise().sum().transpose();
    const Matrix d_z = d_ffn_pre * params.ffn_w1.transpose();

    const Matrix d_gnn_pre = (d_z.array() * (t.gnn_pre.array() > 0.0).cast<double>()).matrix();
    grad.gnn_weight += t.mixed.transpose() * d_gnn_pre;
    grad.gnn_bias += d_gnn_pre.colwise().sum().transpose();
    const Matrix d_mixed = d_gnn_pre * params.gnn_weight.transpose();

    HeadGrads out;
    out.d_node_feats = t.a_norm.transpose() * d_mixed;
    out.d_a_hat = normalize_adjacency_backward(a_hat, t.a_norm, d_mixed * t.node_feats.transpose());
    return out;
}

}  // namespace s3g
