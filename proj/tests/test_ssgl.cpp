#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "s3g/ssgl.hpp"
#include "support.hpp"

using namespace s3g;

namespace {

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

SsmProjections zero_proj(Index d, double ba, double bb, double bc) {
    SsmProjections p;
    p.weight = Matrix::Zero(3, d);
    p.bias = Vector(3);
    p.bias << ba, bb, bc;
    return p;
}

PatchTokens zero_tokens(int slices, Index n, Index d) {
    PatchTokens t;
    for (int s = 0; s < slices; ++s) t.slices.push_back(Matrix::Zero(n, d));
    return t;
}

}  // namespace

TEST_CASE("derive_coeffs examples") {
    const Matrix tokens = Matrix::Zero(4, 3);
    CHECK(derive_coeffs(tokens, zero_proj(3, 0, 0, 0)).a_bar == 0.5);
    CHECK(derive_coeffs(tokens, zero_proj(3, 20, 0, 0)).a_bar > 1.0 - 1e-8);
    CHECK(derive_coeffs(tokens, zero_proj(3, -20, 0, 0)).a_bar < 1e-8);

    Matrix t(2, 2);
    t << 1.0, 2.0, 3.0, -2.0;  // summary (2, 0)
    SsmProjections p = zero_proj(2, 0.1, -0.2, 0.3);
    p.weight << 0.5, 9.0, -1.0, 9.0, 0.25, 9.0;
    const SsmCoeffs c = derive_coeffs(t, p);
    CHECK(std::abs(c.a_bar - sig(1.1)) < 1e-12);
    CHECK(std::abs(c.b_bar - (-2.2)) < 1e-12);
    CHECK(std::abs(c.c - 0.8) < 1e-12);
}

TEST_CASE("ssm_step examples") {
    std::mt19937_64 rng(1);
    const Matrix h = testing::randn(3, 3, rng), a = testing::randn(3, 3, rng);
    CHECK(ssm_step({h}, a, {0.0, 1.0, 1.0}).state.h == a);
    CHECK(ssm_step({h}, a, {1.0, 0.0, 1.0}).state.h == h);

    const SsmStep s = ssm_step({Matrix::Constant(1, 1, 0.4)}, Matrix::Constant(1, 1, 0.8), {0.5, 0.5, 2.0});
    CHECK(std::abs(s.state.h(0, 0) - 0.6) < 1e-15);
    CHECK(std::abs(s.emission_pre(0, 0) - 1.2) < 1e-15);
}

TEST_CASE("ssm state update is linear for fixed coefficients") {
    std::mt19937_64 rng(2);
    const SsmCoeffs c{0.3, -0.7, 1.4};
    const Matrix h1 = testing::randn(4, 4, rng), h2 = testing::randn(4, 4, rng);
    const Matrix a1 = testing::randn(4, 4, rng), a2 = testing::randn(4, 4, rng);
    const double al = 0.8, be = -1.9;
    const Matrix lhs = ssm_step({al * h1 + be * h2}, al * a1 + be * a2, c).state.h;
    const Matrix rhs = al * ssm_step({h1}, a1, c).state.h + be * ssm_step({h2}, a2, c).state.h;
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("two-slice recurrence matches a hand unroll") {
    Matrix a1(2, 2), a2(2, 2);
    a1 << 1.0, 0.3, 0.3, 1.0;
    a2 << 1.0, 0.6, 0.6, 1.0;
    std::vector<SliceGraph> graphs{{a1, 0}, {a2, 1}};
    PatchTokens tokens;
    Matrix t1(2, 2), t2(2, 2);
    t1 << 0.2, -0.4, 0.6, 0.0;  // summary (0.4, -0.2)
    t2 << -1.0, 1.0, 0.0, 0.0;  // summary (-0.5, 0.5)
    tokens.slices = {t1, t2};
    SsmProjections p = zero_proj(2, 0.1, 0.9, 1.2);
    p.weight << 0.5, -0.5, 0.2, 0.1, -0.3, 0.4;

    // Slice 1 coefficients; its decay multiplies the zero initial state.
    const double b_1 = 0.2 * 0.4 + 0.1 * -0.2 + 0.9;
    // Slice 2 coefficients.
    const double a_2 = sig(0.5 * -0.5 - 0.5 * 0.5 + 0.1);
    const double b_2 = 0.2 * -0.5 + 0.1 * 0.5 + 0.9;
    const double c_2 = -0.3 * -0.5 + 0.4 * 0.5 + 1.2;
    for (Index i = 0; i < 2; ++i)
        for (Index j = 0; j < 2; ++j) {
            const double h1 = b_1 * a1(i, j);
            const double h2 = a_2 * h1 + b_2 * a2(i, j);
            const double expected = i == j ? 1.0 : sig(c_2 * h2);
            CHECK(std::abs(run_ssgl(graphs, tokens, p)(i, j) - expected) < 1e-10);
        }
}

TEST_CASE("single-slice run is squash of c times A") {
    std::mt19937_64 rng(3);
    Matrix a = testing::randn(3, 3, rng, 0.1);
    a = 0.5 * (a + a.transpose()).eval();
    a.diagonal().setOnes();
    const Matrix out = run_ssgl({{a, 0}}, zero_tokens(1, 3, 2), zero_proj(2, -40.0, 1.0, 0.5));
    CHECK((out - squash_emission(0.5 * a)).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("zero tokens: output depends only on the biases") {
    std::mt19937_64 rng(4);
    SsmProjections p = init_ssm_projections(3, rng);
    const PatchTokens t = zero_tokens(2, 4, 3);
    const Matrix z = Matrix::Zero(4, 4);
    const Matrix out = run_ssgl({{z, 0}, {z, 1}}, t, p);
    Matrix expected = Matrix::Constant(4, 4, 0.5);
    expected.diagonal().setOnes();
    CHECK((out - expected).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("emission is a valid graph and bounded over many steps") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0), sym(-1.0, 1.0);
    const double B = 2.0;
    SsmGraphState state{Matrix::Zero(6, 6)};
    for (int step = 0; step < 1000; ++step) {
        Matrix a = Matrix::NullaryExpr(6, 6, [&] { return u(rng); });
        const SsmCoeffs c{u(rng), B * sym(rng), B * sym(rng)};
        const double prev_norm = state.h.cwiseAbs().maxCoeff();
        const SsmStep s = ssm_step(state, a, c);
        const double norm = s.state.h.cwiseAbs().maxCoeff();
        CHECK(norm <= c.a_bar * prev_norm + B + 1e-12);
        CHECK(s.a_hat.allFinite());
        CHECK((s.a_hat - s.a_hat.transpose()).cwiseAbs().maxCoeff() == 0.0);
        CHECK(s.a_hat.diagonal().isOnes(0.0));
        CHECK(s.a_hat.minCoeff() > 0.0);
        CHECK(s.a_hat.maxCoeff() <= 1.0);
        state = s.state;
    }
}

TEST_CASE("bypass returns the last graph") {
    std::mt19937_64 rng(6);
    const Matrix a = testing::randn(3, 3, rng), b = testing::randn(3, 3, rng);
    CHECK(ssgl_bypass({{a, 0}, {b, 1}}) == b);
    CHECK(ssgl_bypass({{a, 0}}) == a);
}

TEST_CASE("run_ssgl is deterministic") {
    std::mt19937_64 rng(7);
    PatchTokens t;
    std::vector<SliceGraph> g;
    for (int s = 0; s < 3; ++s) {
        t.slices.push_back(testing::randn(5, 4, rng));
        g.push_back({testing::randn(5, 5, rng), s});
    }
    const SsmProjections p = init_ssm_projections(4, rng);
    CHECK(run_ssgl(g, t, p) == run_ssgl(g, t, p));
}

TEST_CASE("ssgl gradients match central differences") {
    std::mt19937_64 rng(8);
    PatchTokens t;
    std::vector<SliceGraph> g;
    for (int s = 0; s < 3; ++s) {
        t.slices.push_back(testing::randn(4, 3, rng));
        Matrix a = testing::randn(4, 4, rng, 0.5);
        g.push_back({0.5 * (a + a.transpose()), s});
    }
    SsmProjections p = init_ssm_projections(3, rng);
    p.weight = testing::randn(3, 3, rng, 0.5);
    const Matrix probe = testing::randn(4, 4, rng);
    auto loss = [&](const std::vector<SliceGraph>& gg, const PatchTokens& tt, const SsmProjections& pp) {
        return run_ssgl(gg, tt, pp).cwiseProduct(probe).sum();
    };
    SsglTape tape;
    run_ssgl(g, t, p, &tape);
    SsmProjections grad{Matrix::Zero(3, 3), Vector::Zero(3)};
    const SsglGrads sg = ssgl_backward(g, t, p, tape, probe, grad);

    const double eps = 1e-6;
    auto rel = [](double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-7}); };
    double worst = 0.0;
    for (Index k = 0; k < p.weight.size(); ++k) {
        SsmProjections a = p, b = p;
        a.weight(k) += eps;
        b.weight(k) -= eps;
        worst = std::max(worst, rel(grad.weight(k), (loss(g, t, a) - loss(g, t, b)) / (2 * eps)));
    }
    for (Index k = 0; k < 3; ++k) {
        SsmProjections a = p, b = p;
        a.bias(k) += eps;
        b.bias(k) -= eps;
        worst = std::max(worst, rel(grad.bias(k), (loss(g, t, a) - loss(g, t, b)) / (2 * eps)));
    }
    for (int s = 0; s < 3; ++s) {
        for (Index k = 0; k < 16; ++k) {
            auto a = g, b = g;
            a[s].A(k) += eps;
            b[s].A(k) -= eps;
            worst = std::max(worst, rel(sg.d_graphs[s](k), (loss(a, t, p) - loss(b, t, p)) / (2 * eps)));
        }
        for (Index k = 0; k < t.slices[s].size(); ++k) {
            PatchTokens a = t, b = t;
            a.slices[s](k) += eps;
            b.slices[s](k) -= eps;
            worst = std::max(worst, rel(sg.d_tokens[s](k), (loss(g, a, p) - loss(g, b, p)) / (2 * eps)));
        }
    }
    CHECK(worst < 1e-4);
}
