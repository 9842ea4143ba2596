#include "s3g/wdn.hpp"

#include <algorithm>

namespace s3g {

WdnParams zero_wdn_params(int channels, int width) {
    WdnParams p;
    p.width = width;
    p.weight = Matrix::Zero(2 * channels, channels * width);
    p.bias = Vector::Zero(2 * channels);
    return p;
}

WdnParams haar_wdn_params(int channels, int width, double perturb, std::mt19937_64& rng) {
    require(width >= 2, ErrorCode::Config, "wdn kernel width must be >= 2");
    WdnParams p = zero_wdn_params(channels, width);
    const int pad = (width - 1) / 2;
    // Taps reading t-1 and t.
    const int prev = pad - 1 >= 0 ? pad - 1 : 0;
    const int cur = prev == pad ? pad + 1 : pad;
    for (int f = 0; f < channels; ++f) {
        p.weight(f, f * width + cur) = 0.5;
        p.weight(f, f * width + prev) = -0.5;
        p.weight(channels + f, f * width + cur) = 0.5;
        p.weight(channels + f, f * width + prev) = 0.5;
    }
    if (perturb > 0.0) {
        std::normal_distribution<double> jitter(0.0, perturb);
        for (Index k = 0; k < p.weight.size(); ++k) p.weight.data()[k] += jitter(rng);
    }
    return p;
}

Matrix conv_columns(const Matrix& x, int width) {
    const Index len = x.rows();
    const Index f_in = x.cols();
    const Index pad = (width - 1) / 2;
    Matrix cols(len, f_in * width);
    for (Index t = 0; t < len; ++t)
        for (Index f = 0; f < f_in; ++f)
            for (Index k = 0; k < width; ++k) {
                const Index src = std::clamp<Index>(t + k - pad, 0, len - 1);
                cols(t, f * width + k) = x(src, f);
            }
    return cols;
}

namespace {

void check_input(const Matrix& x, const WdnParams& params) {
    require(x.cols() == params.channels(), ErrorCode::Shape,
            "wdn: input has " + std::to_string(x.cols()) + " channels, filters expect " +
                std::to_string(params.channels()));
    require(x.rows() >= params.width, ErrorCode::Config,
            "wdn: series length " + std::to_string(x.rows()) + " shorter than kernel width " +
                std::to_string(params.width));
}

}  // namespace

std::pair<Matrix, Matrix> decompose(const Matrix& x, const WdnParams& params) {
    check_input(x, params);
    const Index f = params.channels();
    Matrix y = conv_columns(x, params.width) * params.weight.transpose();
    y.rowwise() += params.bias.transpose();
    return {y.leftCols(f), y.rightCols(f)};
}

Matrix wdn_forward(const Matrix& x, const WdnParams& params) {
    auto [high, low] = decompose(x, params);
    return low + soft_threshold(high, params.gamma());
}

Tensor3 wdn_forward(const Tensor3& x, const WdnParams& params, WdnTape* tape) {
    require(!x.empty(), ErrorCode::Shape, "wdn: empty batch");
    const Index n = static_cast<Index>(x.size());
    const Index len = x.front().rows();
    const Index f = params.channels();
    for (const Matrix& xi : x) {
        check_input(xi, params);
        require(xi.rows() == len, ErrorCode::Shape, "wdn: ragged window lengths");
    }
    Matrix cols(n * len, f * params.width);
    for (Index i = 0; i < n; ++i) cols.middleRows(i * len, len) = conv_columns(x[i], params.width);
    Matrix y = cols * params.weight.transpose();
    y.rowwise() += params.bias.transpose();
    const Matrix q = y.rightCols(f) + soft_threshold(y.leftCols(f), params.gamma());

    Tensor3 out(n);
    for (Index i = 0; i < n; ++i) out[i] = q.middleRows(i * len, len);
    if (tape) {
        tape->columns = std::move(cols);
        tape->high = y.leftCols(f);
        tape->lookback = len;
    }
    return out;
}

Tensor3 wdn_backward(const WdnTape& tape, const WdnParams& params, const Tensor3& d_q,
                     WdnParams& grad) {
    const Index len = tape.lookback;
    const Index n = static_cast<Index>(d_q.size());
    const Index f = params.channels();
    const double gamma = params.gamma();

    Matrix dq(n * len, f);
    for (Index i = 0; i < n; ++i) dq.middleRows(i * len, len) = d_q[i];

    // d soft_threshold / dh = 1 outside the dead zone; d / dgamma = -sign(h).
    const Eigen::ArrayXXd active = (tape.high.array().abs() > gamma).cast<double>();
    Matrix dy(n * len, 2 * f);
    dy.leftCols(f) = (dq.array() * active).matrix();
    dy.rightCols(f) = dq;
    const double d_gamma = -(dq.array() * active * tape.high.array().sign()).sum();

    grad.weight += dy.transpose() * tape.columns;
    grad.bias += dy.colwise().sum().transpose();
    grad.log_gamma += d_gamma * gamma;

    const Matrix d_cols = dy * params.weight;
    const Index pad = (params.width - 1) / 2;
    Tensor3 dx(n, Matrix::Zero(len, f));
    for (Index i = 0; i < n; ++i)
        for (Index t = 0; t < len; ++t)
            for (Index c = 0; c < f; ++c)
                for (Index k = 0; k < params.width; ++k) {
                    const Index src = std::clamp<Index>(t + k - pad, 0, len - 1);
                    dx[i](src, c) += d_cols(i * len + t, c * params.width + k);
                }
    return dx;
}

}  // namespace s3g
