#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>

#include "s3g/pipeline.hpp"
#include "support.hpp"

using namespace s3g;

namespace {

// Reference loss written out with explicit loops.
double loss_oracle(const Vector& y, const Vector& r, double eta) {
    double mse = 0.0, rank = 0.0;
    for (Index i = 0; i < y.size(); ++i) {
        mse += (y(i) - r(i)) * (y(i) - r(i));
        for (Index j = 0; j < y.size(); ++j) {
            const double v = -(y(i) - y(j)) * (r(i) - r(j));
            if (v > 0) rank += v;
        }
    }
    return mse + eta * rank;
}

ModelConfig tiny_config() {
    ModelConfig c;
    c.features = 3;
    c.lookback = 8;
    c.patches = 2;
    c.hidden = 4;
    c.ffn_hidden = 4;
    return c;
}

WindowBatch random_batch(Index n, const ModelConfig& c, std::mt19937_64& rng) {
    WindowBatch b;
    for (Index i = 0; i < n; ++i) {
        b.X.push_back(testing::randn(c.lookback, c.features, rng));
        b.stocks.push_back(i);
    }
    b.r = testing::randn(n, rng, 0.02);
    return b;
}

ErrorCode load_code(const std::filesystem::path& p, const ModelConfig& c) {
    try {
        load_checkpoint(p, c);
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("load succeeded");
    return ErrorCode::Config;
}

}  // namespace

TEST_CASE("composite loss hand example") {
    Vector y(2), r(2);
    y << 0.1, 0.2;
    r << 0.2, 0.1;
    CHECK(std::abs((y - r).squaredNorm() - 0.02) < 1e-15);
    CHECK(std::abs(ranking_loss(y, r) - 0.02) < 1e-15);
    CHECK(std::abs(composite_loss(y, r, 5.0) - 0.12) < 1e-12);
    CHECK(composite_loss(r, r, 5.0) == 0.0);
    CHECK_THROWS_AS(composite_loss(Vector::Zero(3), Vector::Zero(2), 5.0), Error);
}

TEST_CASE("composite loss matches the loop oracle") {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 50; ++t) {
        const Vector y = testing::randn(7, rng), r = testing::randn(7, rng);
        const double eta = 0.5 * t;
        CHECK(std::abs(composite_loss(y, r, eta) - loss_oracle(y, r, eta)) < 1e-12 * (1 + loss_oracle(y, r, eta)));
        CHECK(composite_loss(y, r, eta) >= 0.0);
    }
}

TEST_CASE("ranking term properties") {
    std::mt19937_64 rng(2);
    const Vector y = testing::randn(6, rng), r = testing::randn(6, rng);
    CHECK(std::abs(ranking_loss(y.array() + 3.7, r) - ranking_loss(y, r)) < 1e-12);
    const double base = ranking_loss(y, r);
    REQUIRE(base > 0.0);
    for (double lambda : {1.5, 2.0, 10.0}) CHECK(std::abs(ranking_loss(lambda * y, r) - lambda * base) < 1e-12);

    // Order-preserving predictions have no ranking penalty.
    const Vector concordant = (r.array() * 1000.0).exp();
    CHECK(ranking_loss(concordant, r) == 0.0);
}

TEST_CASE("loss gradient matches central differences and eta=0 drops the ranking part") {
    std::mt19937_64 rng(3);
    const Vector y = testing::randn(6, rng), r = testing::randn(6, rng);
    const Vector g = composite_loss_grad(y, r, 5.0);
    for (Index k = 0; k < 6; ++k) {
        Vector a = y, b = y;
        a(k) += 1e-7;
        b(k) -= 1e-7;
        const double num = (composite_loss(a, r, 5.0) - composite_loss(b, r, 5.0)) / 2e-7;
        CHECK(relative_error(g(k), num) < 1e-6);
    }
    CHECK((composite_loss_grad(y, r, 0.0) - 2.0 * (y - r)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("sampled pairs estimate the exact loss") {
    std::mt19937_64 rng(4);
    const Vector y = testing::randn(10, rng), r = testing::randn(10, rng);
    const double exact = composite_loss(y, r, 5.0);
    double total = 0.0;
    const int reps = 4000;
    for (int k = 0; k < reps; ++k) total += sampled_composite_loss(y, r, 5.0, 1.0, 20, rng).first;
    CHECK(std::abs(total / reps - exact) / exact < 0.02);
}

TEST_CASE("checkpoint round trip") {
    auto dir = testing::temp_dir("ckpt");
    const ModelConfig cfg = tiny_config();
    Checkpoint c;
    c.model = init_model(cfg, 7);
    c.fingerprint = cfg.fingerprint();
    c.epoch = 3;
    c.valid_ic = 0.125;
    c.valid_loss = 0.5;
    save_checkpoint(c, dir / "m.ckpt");
    const Checkpoint back = load_checkpoint(dir / "m.ckpt", cfg);
    CHECK(back.epoch == 3);
    CHECK(back.valid_ic == 0.125);
    Model a = c.model, b = back.model;
    auto pa = a.parameters(), pb = b.parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t k = 0; k < pa.size(); ++k) {
        CHECK(pa[k].name == pb[k].name);
        CHECK(std::memcmp(pa[k].data, pb[k].data, sizeof(double) * pa[k].rows * pa[k].cols) == 0);
    }
    std::mt19937_64 rng(1);
    const WindowBatch batch = random_batch(5, cfg, rng);
    CHECK((forward(c.model, batch.X) - forward(back.model, batch.X)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("checkpoint corruption and mismatch errors") {
    auto dir = testing::temp_dir("ckpt_bad");
    const ModelConfig cfg = tiny_config();
    Checkpoint c;
    c.model = init_model(cfg, 1);
    c.fingerprint = cfg.fingerprint();
    save_checkpoint(c, dir / "good.ckpt");
    const std::string bytes = testing::read_file(dir / "good.ckpt");

    std::string bad = bytes;
    bad[0] = 'X';
    testing::write_file(dir / "magic.ckpt", bad);
    CHECK(load_code(dir / "magic.ckpt", cfg) == ErrorCode::Checkpoint);

    bad = bytes;
    bad[8] = 9;
    testing::write_file(dir / "version.ckpt", bad);
    CHECK(load_code(dir / "version.ckpt", cfg) == ErrorCode::Version);

    testing::write_file(dir / "short.ckpt", bytes.substr(0, bytes.size() - 5));
    CHECK(load_code(dir / "short.ckpt", cfg) == ErrorCode::Checkpoint);

    testing::write_file(dir / "long.ckpt", bytes + "x");
    CHECK(load_code(dir / "long.ckpt", cfg) == ErrorCode::Checkpoint);

    ModelConfig other = cfg;
    other.use_wdn = false;
    CHECK(load_code(dir / "good.ckpt", other) == ErrorCode::Fingerprint);
    CHECK(load_code(dir / "missing.ckpt", cfg) == ErrorCode::Io);
}

TEST_CASE("fit is deterministic and keeps the best validation IC") {
    std::mt19937_64 rng(5);
    const ModelConfig cfg = tiny_config();
    std::vector<WindowBatch> train, valid;
    for (int d = 0; d < 12; ++d) train.push_back(random_batch(6, cfg, rng));
    for (int d = 0; d < 4; ++d) valid.push_back(random_batch(6, cfg, rng));
    LossConfig lc;
    lc.max_epochs = 4;
    lc.patience = 10;
    std::vector<EpochLog> logs;
    const Checkpoint a = fit(train, valid, init_model(cfg, 2), lc, [&](const EpochLog& e) { logs.push_back(e); });
    const Checkpoint b = fit(train, valid, init_model(cfg, 2), lc);
    REQUIRE(logs.size() == 4);
    Model ma = a.model, mb = b.model;
    auto pa = ma.parameters(), pb = mb.parameters();
    for (std::size_t k = 0; k < pa.size(); ++k)
        CHECK(std::memcmp(pa[k].data, pb[k].data, sizeof(double) * pa[k].rows * pa[k].cols) == 0);
    double best = -1e300;
    int best_epoch = 0;
    for (const EpochLog& e : logs)
        if (std::isfinite(e.valid_ic) && e.valid_ic > best) {
            best = e.valid_ic;
            best_epoch = e.epoch;
        }
    if (best_epoch > 0) CHECK(a.epoch == best_epoch);
    CHECK(a.fingerprint == cfg.fingerprint());
}

TEST_CASE("early stopping honours patience") {
    std::mt19937_64 rng(6);
    const ModelConfig cfg = tiny_config();
    std::vector<WindowBatch> train, valid;
    for (int d = 0; d < 5; ++d) train.push_back(random_batch(5, cfg, rng));
    for (int d = 0; d < 3; ++d) valid.push_back(random_batch(5, cfg, rng));
    LossConfig lc;
    lc.max_epochs = 50;
    lc.patience = 2;
    std::vector<EpochLog> logs;
    fit(train, valid, init_model(cfg, 1), lc, [&](const EpochLog& e) { logs.push_back(e); });
    int since = 0;
    for (const EpochLog& e : logs) since = e.improved ? 0 : since + 1;
    CHECK((static_cast<int>(logs.size()) == 50 || since == 2));
}

TEST_CASE("fit divergence names the step") {
    std::mt19937_64 rng(7);
    const ModelConfig cfg = tiny_config();
    std::vector<WindowBatch> train{random_batch(4, cfg, rng)}, valid{random_batch(4, cfg, rng)};
    train[0].r(1) = std::numeric_limits<double>::infinity();
    try {
        fit(train, valid, init_model(cfg, 1), LossConfig{});
        FAIL("no divergence");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Divergence);
        CHECK(std::string(e.what()).find("step 1") != std::string::npos);
    }
}

TEST_CASE("training on the planted panel halves the loss within 200 steps") {
    const RunConfig cfg = default_run_config();
    const Dataset data = prepare_dataset(cfg);
    Model m = init_model(cfg.model, cfg.train.seed);
    const double initial = mean_loss(m, data.splits.train, cfg.train);
    AdamState state;
    for (int s = 0; s < 200; ++s) {
        auto [loss, grad] = loss_and_grad(m, data.splits.train[s % data.splits.train.size()], cfg.train);
        apply_update(m, grad, cfg.train, state);
    }
    CHECK(mean_loss(m, data.splits.train, cfg.train) < 0.5 * initial);
}

TEST_CASE("loss config validation") {
    LossConfig c;
    c.eta = -1;
    CHECK_THROWS_AS(c.validate(), Error);
    c = LossConfig{};
    c.learning_rate = 0;
    CHECK_THROWS_AS(c.validate(), Error);
}
