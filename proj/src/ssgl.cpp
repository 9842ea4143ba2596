#include "s3g/ssgl.hpp"

namespace s3g {

SsmProjections init_ssm_projections(Index hidden, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, 0.1 / std::sqrt(static_cast<double>(hidden)));
    SsmProjections p;
    p.weight = Matrix::NullaryExpr(3, hidden, [&] { return dist(rng); });
    // sigmoid(0) = 0.5 decay, unit input gate, unit emission gain.
    p.bias = Vector(3);
    p.bias << 0.0, 1.0, 1.0;
    return p;
}

SsmCoeffs derive_coeffs(const Matrix& tokens_slice, const SsmProjections& proj) {
    require(proj.weight.rows() == 3 && proj.weight.cols() == tokens_slice.cols(), ErrorCode::Shape,
            "derive_coeffs: projection shape does not match token dim");
    const Vector summary = tokens_slice.colwise().mean().transpose();
    const Vector z = proj.weight * summary + proj.bias;
    return {sigmoid(z(0)), z(1), z(2)};
}

Matrix squash_emission(const Matrix& pre) {
    Matrix out = (0.5 * (pre + pre.transpose())).unaryExpr([](double v) { return sigmoid(v); });
    out.diagonal().setOnes();
    return out;
}

SsmStep ssm_step(const SsmGraphState& prev, const Matrix& a_t, const SsmCoeffs& coeffs) {
    require(prev.h.rows() == a_t.rows() && prev.h.cols() == a_t.cols(), ErrorCode::Shape,
            "ssm_step: state and graph shapes differ");
    SsmStep step;
    step.state.h = coeffs.a_bar * prev.h + coeffs.b_bar * a_t;
    step.emission_pre = coeffs.c * step.state.h;
    step.a_hat = squash_emission(step.emission_pre);
    return step;
}

Matrix run_ssgl(const std::vector<SliceGraph>& graphs, const PatchTokens& tokens,
                const SsmProjections& proj, SsglTape* tape) {
    require(!graphs.empty(), ErrorCode::Config, "run_ssgl: empty graph list");
    require(tokens.num_slices() == static_cast<Index>(graphs.size()), ErrorCode::Shape,
            "run_ssgl: token slices and graphs differ in count");
    const Index n = graphs.front().A.rows();
    SsmGraphState state{Matrix::Zero(n, n)};
    SsmStep step;
    if (tape) {
        tape->coeffs.clear();
        tape->states.clear();
    }
    for (std::size_t s = 0; s < graphs.size(); ++s) {
        const SsmCoeffs coeffs = derive_coeffs(tokens.slices[s], proj);
        step = ssm_step(state, graphs[s].A, coeffs);
        state = step.state;
        if (tape) {
            tape->coeffs.push_back(coeffs);
            tape->states.push_back(state.h);
        }
    }
    if (tape) tape->a_hat = step.a_hat;
    return step.a_hat;
}

Matrix ssgl_bypass(const std::vector<SliceGraph>& graphs) {
    require(!graphs.empty(), ErrorCode::Config, "ssgl_bypass: empty graph list");
    return graphs.back().A;
}

SsglGrads ssgl_backward(const std::vector<SliceGraph>& graphs, const PatchTokens& tokens,
                        const SsmProjections& proj, const SsglTape& tape, const Matrix& d_a_hat,
                        SsmProjections& grad) {
    const std::size_t slices = graphs.size();
    const Index n = d_a_hat.rows();

    // Through squash: diagonal is constant, off-diagonal is sigmoid of the
    // symmetrized pre-activation.
    Matrix d_sym = (d_a_hat.array() * tape.a_hat.array() * (1.0 - tape.a_hat.array())).matrix();
    d_sym.diagonal().setZero();
    const Matrix d_pre = 0.5 * (d_sym + d_sym.transpose());

    std::vector<Eigen::Vector3d> d_z(slices, Eigen::Vector3d::Zero());
    const SsmCoeffs& last = tape.coeffs.back();
    d_z.back()(2) = (d_pre.array() * tape.states.back().array()).sum();
    Matrix d_h = last.c * d_pre;

    SsglGrads out;
    out.d_graphs.assign(slices, Matrix());
    for (std::size_t s = slices; s-- > 0;) {
        const SsmCoeffs& k = tape.coeffs[s];
        const Matrix h_prev = s > 0 ? tape.states[s - 1] : Matrix::Zero(n, n);
        const double d_a_bar = (d_h.array() * h_prev.array()).sum();
        d_z[s](0) = d_a_bar * k.a_bar * (1.0 - k.a_bar);
        d_z[s](1) = (d_h.array() * graphs[s].A.array()).sum();
        out.d_graphs[s] = k.b_bar * d_h;
        d_h = (k.a_bar * d_h).eval();
    }

    out.d_tokens.resize(slices);
    for (std::size_t s = 0; s < slices; ++s) {
        const Matrix& t = tokens.slices[s];
        const Vector summary = t.colwise().mean().transpose();
        grad.weight += d_z[s] * summary.transpose();
        grad.bias += d_z[s];
        const Vector d_summary = proj.weight.transpose() * d_z[s];
        out.d_tokens[s] = (d_summary / static_cast<double>(t.rows())).transpose().replicate(t.rows(), 1);
    }
    return out;
}

}  // namespace s3g
