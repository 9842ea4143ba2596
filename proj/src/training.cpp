#include "s3g/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "s3g/evaluation.hpp"

namespace s3g {

void LossConfig::validate() const {
    require(eta >= 0.0, ErrorCode::Config, "train.eta must be >= 0");
    require(mse_weight >= 0.0, ErrorCode::Config, "train.mse_weight must be >= 0");
    require(learning_rate > 0.0, ErrorCode::Config, "train.learning_rate must be > 0");
    require(max_epochs >= 1, ErrorCode::Config, "train.epochs must be >= 1");
    require(patience >= 1, ErrorCode::Config, "train.patience must be >= 1");
    require(pair_samples >= 0, ErrorCode::Config, "train.pair_samples must be >= 0");
}

double ranking_loss(const Vector& y, const Vector& r) {
    require(y.size() == r.size(), ErrorCode::Shape, "ranking_loss: length mismatch");
    double total = 0.0;
    for (Index i = 0; i < y.size(); ++i)
        for (Index j = 0; j < y.size(); ++j) total += std::max(0.0, -(y(i) - y(j)) * (r(i) - r(j)));
    return total;
}

double composite_loss(const Vector& y, const Vector& r, double eta, double mse_weight) {
    require(y.size() == r.size(), ErrorCode::Shape,
            "composite_loss: y has " + std::to_string(y.size()) + " entries, r has " +
                std::to_string(r.size()));
    return mse_weight * (y - r).squaredNorm() + eta * ranking_loss(y, r);
}

Vector composite_loss_grad(const Vector& y, const Vector& r, double eta, double mse_weight) {
    require(y.size() == r.size(), ErrorCode::Shape, "composite_loss_grad: length mismatch");
    Vector g = 2.0 * mse_weight * (y - r);
    if (eta == 0.0) return g;
    for (Index i = 0; i < y.size(); ++i)
        for (Index j = 0; j < y.size(); ++j) {
            const double dr = r(i) - r(j);
            if (-(y(i) - y(j)) * dr > 0.0) {
                // Each ordered pair contributes -dr to y_i and +dr to y_j.
                g(i) -= eta * dr;
                g(j) += eta * dr;
            }
        }
    return g;
}

std::pair<double, Vector> sampled_composite_loss(const Vector& y, const Vector& r, double eta,
                                                 double mse_weight, int samples,
                                                 std::mt19937_64& rng) {
    require(y.size() == r.size(), ErrorCode::Shape, "sampled_composite_loss: length mismatch");
    require(samples >= 1, ErrorCode::Config, "sampled_composite_loss: samples must be >= 1");
    const Index n = y.size();
    double loss = mse_weight * (y - r).squaredNorm();
    Vector g = 2.0 * mse_weight * (y - r);
    std::uniform_int_distribution<Index> pick(0, n - 1);
    const double scale = eta * static_cast<double>(n) * static_cast<double>(n) / samples;
    for (int k = 0; k < samples; ++k) {
        const Index i = pick(rng);
        const Index j = pick(rng);
        const double dr = r(i) - r(j);
        const double v = -(y(i) - y(j)) * dr;
        if (v > 0.0) {
            loss += scale * v;
            g(i) -= scale * dr;
            g(j) += scale * dr;
        }
    }
    return {loss, g};
}

double relative_error(double analytic, double numeric, double floor) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

GradCheckResult grad_check(Model& model, const std::function<double()>& loss_at, Model& analytic,
                           double epsilon) {
    GradCheckResult res;
    auto params = model.parameters();
    auto grads = analytic.parameters();
    require(params.size() == grads.size(), ErrorCode::Shape, "grad_check: gradient layout mismatch");
    for (std::size_t p = 0; p < params.size(); ++p) {
        auto theta = params[p].flat();
        auto g = grads[p].flat();
        for (Index k = 0; k < theta.size(); ++k) {
            const double saved = theta(k);
            theta(k) = saved + epsilon;
            const double up = loss_at();
            theta(k) = saved - epsilon;
            const double down = loss_at();
            theta(k) = saved;
            require(std::isfinite(up) && std::isfinite(down), ErrorCode::NonFinite,
                    "grad_check: non-finite loss perturbing " + params[p].name);
            const double numeric = (up - down) / (2.0 * epsilon);
            const double err = relative_error(g(k), numeric);
            ++res.checked;
            if (err > res.max_rel_error || res.checked == 1) {
                res.max_rel_error = err;
                res.worst_param = params[p].name;
                res.worst_index = k;
                res.analytic = g(k);
                res.numeric = numeric;
            }
        }
    }
    return res;
}

GradCheckResult grad_check(const Model& model, const WindowBatch& batch, double eta, double epsilon,
                           double mse_weight) {
    Model work = model;
    ForwardTape tape;
    const Vector y = forward(work, batch.X, &tape);
    const double base = composite_loss(y, batch.r, eta, mse_weight);
    require(std::isfinite(base), ErrorCode::NonFinite, "grad_check: non-finite loss");
    Model analytic = backward(work, tape, composite_loss_grad(y, batch.r, eta, mse_weight));
    auto loss_at = [&] { return composite_loss(forward(work, batch.X), batch.r, eta, mse_weight); };
    return grad_check(work, loss_at, analytic, epsilon);
}

void apply_update(Model& model, Model& grad, const LossConfig& cfg, AdamState& state) {
    auto params = model.parameters();
    auto grads = grad.parameters();
    if (cfg.optimizer == Optimizer::Sgd) {
        for (std::size_t p = 0; p < params.size(); ++p)
            params[p].flat() -= cfg.learning_rate * grads[p].flat();
        return;
    }
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    if (state.m.empty()) {
        for (const ParamRef& p : params) {
            state.m.push_back(Vector::Zero(p.rows * p.cols));
            state.v.push_back(Vector::Zero(p.rows * p.cols));
        }
    }
    ++state.step;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.step));
    for (std::size_t p = 0; p < params.size(); ++p) {
        auto g = grads[p].flat();
        state.m[p] = beta1 * state.m[p] + (1.0 - beta1) * g;
        state.v[p] = beta2 * state.v[p] + (1.0 - beta2) * g.cwiseAbs2();
        params[p].flat().array() -=
            cfg.learning_rate * (state.m[p].array() / bc1) / ((state.v[p].array() / bc2).sqrt() + eps);
    }
}

std::pair<double, Model> loss_and_grad(const Model& model, const WindowBatch& batch,
                                       const LossConfig& cfg, std::mt19937_64* pair_rng) {
    ForwardTape tape;
    const Vector y = forward(model, batch.X, &tape);
    double loss;
    Vector d_y;
    if (cfg.pair_samples > 0 && pair_rng) {
        std::tie(loss, d_y) =
            sampled_composite_loss(y, batch.r, cfg.eta, cfg.mse_weight, cfg.pair_samples, *pair_rng);
    } else {
        loss = composite_loss(y, batch.r, cfg.eta, cfg.mse_weight);
        d_y = composite_loss_grad(y, batch.r, cfg.eta, cfg.mse_weight);
    }
    return {loss, backward(model, tape, d_y)};
}

double mean_loss(const Model& model, const std::vector<WindowBatch>& days, const LossConfig& cfg) {
    if (days.empty()) return std::numeric_limits<double>::quiet_NaN();
    double total = 0.0;
    for (const WindowBatch& b : days) total += composite_loss(forward(model, b.X), b.r, cfg.eta, cfg.mse_weight);
    return total / static_cast<double>(days.size());
}

double validation_ic(const Model& model, const std::vector<WindowBatch>& days) {
    double total = 0.0;
    int count = 0;
    for (const WindowBatch& b : days) {
        if (b.size() < 3) continue;
        const double ic = pearson(forward(model, b.X), b.r);
        if (std::isnan(ic)) continue;
        total += ic;
        ++count;
    }
    return count ? total / count : std::numeric_limits<double>::quiet_NaN();
}

Checkpoint fit(const std::vector<WindowBatch>& train, const std::vector<WindowBatch>& valid,
               Model init, const LossConfig& cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    require(!train.empty(), ErrorCode::Config, "fit: empty training split");
    require(!valid.empty(), ErrorCode::Config, "fit: empty validation split");

    Model model = std::move(init);
    AdamState adam;
    std::mt19937_64 rng(cfg.seed);
    std::mt19937_64 pair_rng(cfg.seed ^ 0x9e3779b97f4a7c15ull);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    Checkpoint best;
    best.model = model;
    best.fingerprint = model.config.fingerprint();
    best.valid_ic = -std::numeric_limits<double>::infinity();
    int since_best = 0;
    long step = 0;
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double total = 0.0;
        for (std::size_t k : order) {
            const WindowBatch& day = train[k];
            if (day.size() < 2) continue;
            auto [loss, grad] = loss_and_grad(model, day, cfg, &pair_rng);
            ++step;
            require(std::isfinite(loss), ErrorCode::Divergence,
                    "non-finite loss at epoch " + std::to_string(epoch) + " step " + std::to_string(step) +
                        " (day " + day.date + ")");
            apply_update(model, grad, cfg, adam);
            total += loss;
        }
        EpochLog log;
        log.epoch = epoch;
        log.train_loss = total / static_cast<double>(train.size());
        log.valid_loss = mean_loss(model, valid, cfg);
        log.valid_ic = validation_ic(model, valid);
        const double ic = std::isnan(log.valid_ic) ? -std::numeric_limits<double>::infinity() : log.valid_ic;
        log.improved = epoch == 1 || ic > best.valid_ic;
        if (log.improved) {
            best.model = model;
            best.epoch = epoch;
            best.valid_ic = log.valid_ic;
            best.valid_loss = log.valid_loss;
            since_best = 0;
        } else {
            ++since_best;
        }
        if (on_epoch) on_epoch(log);
        if (since_best >= cfg.patience) break;
    }
    return best;
}

// Checkpoint layout (little endian):
//   8  bytes  magic "S3GCKPT\0"
//   u32       version
//   u64       model config fingerprint
//   i32       epoch
//   f64 f64   validation IC, validation loss
//   u32       parameter count
//   per parameter: u32 name length, name bytes, u32 rows, u32 cols,
//                  rows*cols f64 in column-major order
namespace {

constexpr char kMagic[8] = {'S', '3', 'G', 'C', 'K', 'P', 'T', '\0'};
static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little endian");

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& in, const std::string& what) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    require(static_cast<bool>(in), ErrorCode::Checkpoint, "checkpoint truncated reading " + what);
    return v;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorCode::Io, "cannot write checkpoint " + path.string());
    out.write(kMagic, sizeof kMagic);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, ckpt.fingerprint);
    put<std::int32_t>(out, ckpt.epoch);
    put<double>(out, ckpt.valid_ic);
    put<double>(out, ckpt.valid_loss);
    Model copy = ckpt.model;
    auto params = copy.parameters();
    put<std::uint32_t>(out, static_cast<std::uint32_t>(params.size()));
    for (const ParamRef& p : params) {
        put<std::uint32_t>(out, static_cast<std::uint32_t>(p.name.size()));
        out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(p.rows));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(p.cols));
        out.write(reinterpret_cast<const char*>(p.data),
                  static_cast<std::streamsize>(p.rows * p.cols * sizeof(double)));
    }
    require(out.good(), ErrorCode::Io, "write failed for checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& config) {
    std::ifstream in(path, std::ios::binary);
    require(in.good(), ErrorCode::Io, "cannot open checkpoint " + path.string());
    char magic[sizeof kMagic];
    in.read(magic, sizeof magic);
    require(in && std::memcmp(magic, kMagic, sizeof kMagic) == 0, ErrorCode::Checkpoint,
            "not a checkpoint file (bad magic): " + path.string());
    const auto version = get<std::uint32_t>(in, "version");
    require(version == kCheckpointVersion, ErrorCode::Version,
            "checkpoint version " + std::to_string(version) + ", expected " +
                std::to_string(kCheckpointVersion));

    Checkpoint ckpt;
    ckpt.fingerprint = get<std::uint64_t>(in, "fingerprint");
    ckpt.epoch = get<std::int32_t>(in, "epoch");
    ckpt.valid_ic = get<double>(in, "valid_ic");
    ckpt.valid_loss = get<double>(in, "valid_loss");
    require(ckpt.fingerprint == config.fingerprint(), ErrorCode::Fingerprint,
            "checkpoint was trained with a different model config (" + config.canonical() + ")");

    ckpt.model = init_model(config, 0);
    auto params = ckpt.model.parameters();
    const auto count = get<std::uint32_t>(in, "parameter count");
    require(count == params.size(), ErrorCode::Checkpoint,
            "checkpoint has " + std::to_string(count) + " tensors, config expects " +
                std::to_string(params.size()));
    for (ParamRef& p : params) {
        const auto len = get<std::uint32_t>(in, "name length");
        require(len < 256, ErrorCode::Checkpoint, "corrupt parameter name length");
        std::string name(len, '\0');
        in.read(name.data(), len);
        require(static_cast<bool>(in) && name == p.name, ErrorCode::Checkpoint,
                "expected tensor '" + p.name + "', found '" + name + "'");
        const auto rows = get<std::uint32_t>(in, p.name + " rows");
        const auto cols = get<std::uint32_t>(in, p.name + " cols");
        require(rows == p.rows && cols == p.cols, ErrorCode::Checkpoint, "shape mismatch for " + p.name);
        in.read(reinterpret_cast<char*>(p.data), static_cast<std::streamsize>(rows * cols * sizeof(double)));
        require(static_cast<bool>(in), ErrorCode::Checkpoint, "checkpoint truncated in " + p.name);
    }
    in.peek();
    require(in.eof(), ErrorCode::Checkpoint, "trailing bytes after checkpoint payload");
    return ckpt;
}

}  // namespace s3g
