#ifndef S3G_SSGL_HPP
#define S3G_SSGL_HPP

#include <random>

#include "s3g/common.hpp"
#include "s3g/graph.hpp"

namespace s3g {

// Projections from a slice summary (mean token, length D) to the three gate
// scalars. Row 0 drives the decay gate, row 1 the input gate, row 2 the
// emission gain.
struct SsmProjections {
    Matrix weight;  // 3 x D
    Vector bias;    // 3
};

struct SsmCoeffs {
    double a_bar = 0.5;  // in (0, 1)
    double b_bar = 1.0;
    double c = 1.0;
};

struct SsmGraphState {
    Matrix h;
};

struct SsmStep {
    SsmGraphState state;
    Matrix emission_pre;  // c * h before symmetrize/squash
    Matrix a_hat;         // predicted next-slice adjacency
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

SsmProjections init_ssm_projections(Index hidden, std::mt19937_64& rng);

SsmCoeffs derive_coeffs(const Matrix& tokens_slice, const SsmProjections& proj);

// Symmetrize, squash into (0, 1), force a unit diagonal.
Matrix squash_emission(const Matrix& pre);

SsmStep ssm_step(const SsmGraphState& prev, const Matrix& a_t, const SsmCoeffs& coeffs);

struct SsglTape {
    std::vector<SsmCoeffs> coeffs;
    std::vector<Matrix> states;  // h_{T_1..T_n}
    Matrix a_hat;
};

Matrix run_ssgl(const std::vector<SliceGraph>& graphs, const PatchTokens& tokens,
                const SsmProjections& proj, SsglTape* tape = nullptr);

Matrix ssgl_bypass(const std::vector<SliceGraph>& graphs);

struct SsglGrads {
    std::vector<Matrix> d_graphs;  // dL/dA_{T_i}
    Tensor3 d_tokens;              // dL/dtokens per slice (through the summaries)
};

SsglGrads ssgl_backward(const std::vector<SliceGraph>& graphs, const PatchTokens& tokens,
                        const SsmProjections& proj, const SsglTape& tape, const Matrix& d_a_hat,
                        SsmProjections& grad);

}  // namespace s3g

#endif  // S3G_SSGL_HPP
