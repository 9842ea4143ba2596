#ifndef S3G_TRAINING_HPP
#define S3G_TRAINING_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>

#include "s3g/data.hpp"
#include "s3g/model.hpp"

namespace s3g {

enum class Optimizer { Adam, Sgd };

struct LossConfig {
    double eta = 5.0;
    double mse_weight = 1.0;
    double learning_rate = 0.01;
    int max_epochs = 20;
    int patience = 5;
    std::uint64_t seed = 1;
    Optimizer optimizer = Optimizer::Adam;
    // 0 = exact O(N^2) ranking term; otherwise sample this many ordered pairs
    // per day, rescaled to an unbiased estimate of the full sum.
    int pair_samples = 0;

    void validate() const;
};

// Per-day loss: mse_weight * sum (y - r)^2 + eta * sum_{i,j} max(0, -(y_i - y_j)(r_i - r_j)).
double composite_loss(const Vector& y, const Vector& r, double eta, double mse_weight = 1.0);
// Ranking term alone (the double sum, unweighted).
double ranking_loss(const Vector& y, const Vector& r);
// dL/dy of composite_loss; zero subgradient at hinge kinks.
Vector composite_loss_grad(const Vector& y, const Vector& r, double eta, double mse_weight = 1.0);

// Sampled-pair estimate: value and dL/dy. Pairs drawn uniformly with
// replacement from all N^2 ordered pairs.
std::pair<double, Vector> sampled_composite_loss(const Vector& y, const Vector& r, double eta,
                                                 double mse_weight, int samples,
                                                 std::mt19937_64& rng);

struct GradCheckResult {
    double max_rel_error = 0.0;
    std::string worst_param;
    Index worst_index = 0;
    double analytic = 0.0;
    double numeric = 0.0;
    std::size_t checked = 0;
};

// |a - n| / max(|a|, |n|, floor). The floor keeps entries whose true gradient
// is ~0 from dominating on round-off alone.
double relative_error(double analytic, double numeric, double floor = 1e-7);

// Central-difference check of every entry of every parameter of `model`.
// `loss_at` evaluates the scalar loss for the current parameter values;
// `analytic` holds the gradient in the same layout as `model`.
GradCheckResult grad_check(Model& model, const std::function<double()>& loss_at,
                           Model& analytic, double epsilon = 1e-5);

// Full pipeline: composite_loss(forward(model, batch.X), batch.r).
GradCheckResult grad_check(const Model& model, const WindowBatch& batch, double eta,
                           double epsilon = 1e-5, double mse_weight = 1.0);

struct Checkpoint {
    Model model;
    std::uint64_t fingerprint = 0;
    int epoch = 0;
    double valid_ic = 0.0;
    double valid_loss = 0.0;
};

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double valid_loss = 0.0;
    double valid_ic = 0.0;
    bool improved = false;
};

struct AdamState {
    std::vector<Vector> m;
    std::vector<Vector> v;
    long step = 0;
};

// One optimizer update of `model` with gradient `grad`.
void apply_update(Model& model, Model& grad, const LossConfig& cfg, AdamState& state);

// Loss and gradient for one day.
std::pair<double, Model> loss_and_grad(const Model& model, const WindowBatch& batch,
                                       const LossConfig& cfg, std::mt19937_64* pair_rng = nullptr);

double mean_loss(const Model& model, const std::vector<WindowBatch>& days, const LossConfig& cfg);

// Mean daily Pearson IC of the model's scores on `days`.
double validation_ic(const Model& model, const std::vector<WindowBatch>& days);

using EpochCallback = std::function<void(const EpochLog&)>;

Checkpoint fit(const std::vector<WindowBatch>& train, const std::vector<WindowBatch>& valid,
               Model init, const LossConfig& cfg, const EpochCallback& on_epoch = {});

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
// `config` supplies parameter shapes; names and shapes in the file must match.
Checkpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig& config);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace s3g

#endif  // S3G_TRAINING_HPP
