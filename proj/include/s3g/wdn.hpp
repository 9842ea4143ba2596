#ifndef S3G_WDN_HPP
#define S3G_WDN_HPP

#include <cmath>
#include <random>
#include <utility>

#include "s3g/common.hpp"

namespace s3g {

// Learned two-branch temporal filter bank with a soft-thresholded high branch.
//
// weight is (2F) x (F * width): row o is output channel o, column f * width + k
// is input channel f at tap k. Tap k reads time step t + k - pad with
// pad = (width - 1) / 2 and edge replication outside [0, L). Output channels
// [0, F) are the high branch, [F, 2F) the low branch.
struct WdnParams {
    Matrix weight;
    Vector bias;
    double log_gamma = std::log(0.1);  // threshold = exp(log_gamma) > 0
    int width = 4;

    int channels() const { return static_cast<int>(bias.size() / 2); }
    double gamma() const { return std::exp(log_gamma); }
};

// Haar pair on taps (t-1, t) (taps (t, t+1) when width is 2): high = (x_t - x_{t-1}) / 2, low = (x_t + x_{t-1}) / 2,
// so low + high reconstructs x_t when nothing is thresholded. `perturb` adds
// N(0, perturb^2) noise to every weight.
WdnParams haar_wdn_params(int channels, int width, double perturb, std::mt19937_64& rng);
WdnParams zero_wdn_params(int channels, int width);

// Elementwise sign(h) * max(|h| - gamma, 0).
template <typename Derived>
typename Derived::PlainObject soft_threshold(const Eigen::MatrixBase<Derived>& h,
                                             typename Derived::Scalar gamma) {
    using Scalar = typename Derived::Scalar;
    return h.unaryExpr([gamma](Scalar v) {
        const Scalar mag = std::abs(v) - gamma;
        if (mag <= Scalar(0)) return Scalar(0);
        return v > Scalar(0) ? mag : -mag;
    });
}

// Replicate-padded im2col: L x (F * width).
Matrix conv_columns(const Matrix& x, int width);

// x is L x F. Returns (H, L_low), each L x F.
std::pair<Matrix, Matrix> decompose(const Matrix& x, const WdnParams& params);
Matrix wdn_forward(const Matrix& x, const WdnParams& params);
inline Matrix wdn_bypass(const Matrix& x) { return x; }

// Batched forward over all stocks with the intermediates needed for backward.
struct WdnTape {
    Matrix columns;  // (N*L) x (F*width)
    Matrix high;     // (N*L) x F, pre-threshold
    Index lookback = 0;
};

Tensor3 wdn_forward(const Tensor3& x, const WdnParams& params, WdnTape* tape);

// Accumulates parameter gradients into `grad` and returns dL/dx.
Tensor3 wdn_backward(const WdnTape& tape, const WdnParams& params, const Tensor3& d_q,
                     WdnParams& grad);

}  // namespace s3g

#endif  // S3G_WDN_HPP
