#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Eigenvalues>

#include "s3g/graph.hpp"
#include "support.hpp"

using namespace s3g;

namespace {

double kernel_oracle(const Vector& a, const Vector& b, double sigma_sq) {
    double d = 0.0;
    for (Index k = 0; k < a.size(); ++k) d += (a(k) - b(k)) * (a(k) - b(k));
    return std::exp(-d / (2.0 * sigma_sq));
}

void check_slice_graph(const Matrix& A) {
    const Index n = A.rows();
    for (Index i = 0; i < n; ++i) {
        CHECK(A(i, i) == 1.0);
        for (Index j = 0; j < n; ++j) {
            CHECK(std::abs(A(i, j) - A(j, i)) < 1e-12);
            CHECK(A(i, j) > 0.0);
            CHECK(A(i, j) <= 1.0);
        }
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(A);
    CHECK(es.eigenvalues().minCoeff() >= -1e-8);
}

}  // namespace

TEST_CASE("patch shapes") {
    std::mt19937_64 rng(1);
    Tensor3 q;
    for (int i = 0; i < 5; ++i) q.push_back(testing::randn(20, 6, rng));
    const Tensor3 p = patch(q, 4);
    REQUIRE(p.size() == 4);
    for (const Matrix& s : p) {
        CHECK(s.rows() == 5);
        CHECK(s.cols() == 30);
    }
    const Tensor3 one = patch(q, 1);
    REQUIRE(one.size() == 1);
    // Single patch is the full window flattened time-major.
    for (Index t = 0; t < 20; ++t)
        for (Index f = 0; f < 6; ++f) CHECK(one[0](2, t * 6 + f) == q[2](t, f));
}

TEST_CASE("patch drops the oldest remainder steps") {
    Matrix ramp(20, 1);
    for (int t = 0; t < 20; ++t) ramp(t, 0) = t + 1;
    const Tensor3 p = patch(Tensor3{ramp}, 3);
    REQUIRE(p.size() == 3);
    const double expected[3][6] = {{3, 4, 5, 6, 7, 8}, {9, 10, 11, 12, 13, 14}, {15, 16, 17, 18, 19, 20}};
    for (int s = 0; s < 3; ++s) {
        REQUIRE(p[s].cols() == 6);
        for (int k = 0; k < 6; ++k) CHECK(p[s](0, k) == expected[s][k]);
    }
    CHECK_THROWS_AS(patch(Tensor3{ramp}, 0), Error);
    CHECK_THROWS_AS(patch(Tensor3{ramp}, 21), Error);
}

TEST_CASE("embed examples") {
    std::mt19937_64 rng(2);
    const Tensor3 patches{testing::randn(4, 6, rng), testing::randn(4, 6, rng)};
    EmbedParams id{Matrix::Identity(6, 6), Vector::Zero(6)};
    const PatchTokens t = embed(patches, id);
    CHECK(t.slices[0] == patches[0]);
    CHECK(t.slices[1] == patches[1]);

    Vector b = testing::randn(3, rng);
    EmbedParams zero{Matrix::Zero(6, 3), b};
    const PatchTokens tz = embed(patches, zero);
    for (const Matrix& s : tz.slices)
        for (Index i = 0; i < s.rows(); ++i) CHECK(s.row(i).transpose() == b);

    EmbedParams r = random_embed_params(6, 5, rng);
    r.bias = testing::randn(5, rng);
    const PatchTokens tr = embed(patches, r);
    for (std::size_t s = 0; s < patches.size(); ++s)
        for (Index i = 0; i < 4; ++i)
            for (Index d = 0; d < 5; ++d) {
                double acc = r.bias(d);
                for (Index k = 0; k < 6; ++k) acc += patches[s](i, k) * r.weight(k, d);
                CHECK(std::abs(tr.slices[s](i, d) - acc) < 1e-10);
            }
    CHECK_THROWS_AS(embed(patches, EmbedParams{Matrix::Zero(5, 3), Vector::Zero(3)}), Error);
}

TEST_CASE("gaussian_graph examples") {
    Matrix x(3, 2);
    x << 0, 0, 0, 0, 1, 1;
    const SliceGraph g = gaussian_graph(x, 1.0);
    CHECK(g.A(0, 1) == 1.0);
    // |x_0 - x_2|^2 = 2 = 2 sigma^2.
    CHECK(std::abs(g.A(0, 2) - std::exp(-1.0)) < 1e-12);
    CHECK(std::abs(g.A(0, 2) - 0.367879) < 1e-6);

    std::mt19937_64 rng(3);
    const Matrix big = gaussian_graph(testing::randn(6, 4, rng), 1e9).A;
    CHECK((big.array() - 1.0).abs().maxCoeff() < 1e-12);

    CHECK_THROWS_AS(gaussian_graph(x, 0.0), Error);
    CHECK_THROWS_AS(gaussian_graph(Matrix::Zero(1, 2), 1.0), Error);
}

TEST_CASE("build_slice_graphs matches the scalar kernel oracle") {
    std::mt19937_64 rng(4);
    PatchTokens tokens;
    for (int s = 0; s < 4; ++s) tokens.slices.push_back(testing::randn(3, 5, rng));
    const auto fixed = build_slice_graphs(tokens, Bandwidth{false, 1.3});
    REQUIRE(fixed.size() == 4);
    for (int s = 0; s < 4; ++s) {
        CHECK(fixed[s].slice_index == s);
        CHECK(fixed[s].A.rows() == 3);
        for (Index i = 0; i < 3; ++i)
            for (Index j = 0; j < 3; ++j) {
                const double ref = i == j ? 1.0
                                          : kernel_oracle(tokens.slices[s].row(i).transpose(),
                                                          tokens.slices[s].row(j).transpose(), 1.69);
                CHECK(std::abs(fixed[s].A(i, j) - ref) < 1e-12);
            }
    }

    // Median heuristic: sigma^2 is the median of the three pairwise distances.
    const auto med = build_slice_graphs(tokens, Bandwidth{});
    for (int s = 0; s < 4; ++s) {
        const Matrix& X = tokens.slices[s];
        std::vector<double> d{(X.row(0) - X.row(1)).squaredNorm(), (X.row(0) - X.row(2)).squaredNorm(),
                              (X.row(1) - X.row(2)).squaredNorm()};
        std::sort(d.begin(), d.end());
        const double sigma_sq = d[1];
        CHECK(std::abs(med[s].A(0, 2) - kernel_oracle(X.row(0).transpose(), X.row(2).transpose(), sigma_sq)) <
              1e-12);
    }
}

TEST_CASE("identical token trajectories give all-ones graphs") {
    Matrix row(1, 4);
    row << 0.3, -1.0, 2.0, 0.5;
    PatchTokens tokens;
    for (int s = 0; s < 3; ++s) tokens.slices.push_back(row.replicate(5, 1) * (s + 1.0));
    for (const Bandwidth& bw : {Bandwidth{}, Bandwidth{false, 0.7}})
        for (const SliceGraph& g : build_slice_graphs(tokens, bw)) CHECK(g.A == Matrix::Ones(5, 5));
}

TEST_CASE("slice graphs are valid Gram matrices") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const Index n = 2 + trial % 19;
        const Matrix x = testing::randn(n, 6, rng, 0.5 + trial * 0.1);
        check_slice_graph(gaussian_graph(x, Bandwidth{}, nullptr).A);
        check_slice_graph(gaussian_graph(x, 0.8).A);
    }
}

TEST_CASE("gaussian_graph is translation invariant") {
    std::mt19937_64 rng(6);
    const Matrix x = testing::randn(7, 4, rng);
    const Vector shift = testing::randn(4, rng, 3.0);
    const Matrix moved = x.rowwise() + shift.transpose();
    for (const Bandwidth& bw : {Bandwidth{}, Bandwidth{false, 1.1}}) {
        const Matrix a = gaussian_graph(x, bw, nullptr).A, b = gaussian_graph(moved, bw, nullptr).A;
        CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("graph construction gradients match central differences") {
    std::mt19937_64 rng(7);
    const Matrix x = testing::randn(5, 3, rng);
    const Matrix probe = testing::randn(5, 5, rng);
    for (const Bandwidth& bw : {Bandwidth{}, Bandwidth{false, 0.9}}) {
        GraphTape tape;
        const SliceGraph g = gaussian_graph(x, bw, &tape);
        const Matrix dx = gaussian_graph_backward(x, g, tape, bw, probe);
        double worst = 0.0;
        const double eps = 1e-6;
        for (Index k = 0; k < x.size(); ++k) {
            Matrix a = x, b = x;
            a(k) += eps;
            b(k) -= eps;
            const double num = (gaussian_graph(a, bw, nullptr).A.cwiseProduct(probe).sum() -
                                gaussian_graph(b, bw, nullptr).A.cwiseProduct(probe).sum()) /
                               (2 * eps);
            worst = std::max(worst, std::abs(num - dx(k)) / std::max({std::abs(num), std::abs(dx(k)), 1e-7}));
        }
        CHECK(worst < 1e-4);
    }
}

TEST_CASE("patch and embed gradients through the whole chain") {
    // Linear chain: loss = <probe, embed(patch(q))>; d/dweight is patches^T probe.
    std::mt19937_64 rng(8);
    Tensor3 q{testing::randn(8, 2, rng), testing::randn(8, 2, rng)};
    EmbedParams p = random_embed_params(8, 3, rng);
    Tensor3 probe{testing::randn(2, 3, rng), testing::randn(2, 3, rng)};
    auto loss = [&](const EmbedParams& e) {
        const PatchTokens t = embed(patch(q, 2), e);
        double s = 0.0;
        for (int k = 0; k < 2; ++k) s += t.slices[k].cwiseProduct(probe[k]).sum();
        return s;
    };
    const Tensor3 pt = patch(q, 2);
    Matrix analytic = Matrix::Zero(8, 3);
    for (int k = 0; k < 2; ++k) analytic += pt[k].transpose() * probe[k];
    const double eps = 1e-6;
    for (Index k = 0; k < p.weight.size(); ++k) {
        EmbedParams a = p, b = p;
        a.weight(k) += eps;
        b.weight(k) -= eps;
        const double num = (loss(a) - loss(b)) / (2 * eps);
        CHECK(std::abs(num - analytic(k)) / std::max({std::abs(num), std::abs(analytic(k)), 1e-7}) < 1e-4);
    }
}
