#ifndef S3G_PIPELINE_HPP
#define S3G_PIPELINE_HPP

#include <vector>

#include "s3g/config.hpp"
#include "s3g/evaluation.hpp"
#include "s3g/training.hpp"

namespace s3g {

struct Dataset {
    Panel panel;
    Matrix returns;  // (days - 1) x N
    Splits splits;
};

// Loads data.panel, or generates the synthetic panel when no path is set.
Panel load_or_generate(const RunConfig& cfg);
Dataset prepare_dataset(const RunConfig& cfg);

Checkpoint train_model(const RunConfig& cfg, const Dataset& data, const EpochCallback& on_epoch = {});

// days x N score matrix for the given windows; stocks absent from a window
// are NaN.
Matrix score_days(const Model& model, const std::vector<WindowBatch>& days, Index n_stocks);
// Realized returns aligned with score_days; NaN where a stock has no window.
Matrix realized_returns(const std::vector<WindowBatch>& days, Index n_stocks);

struct Evaluation {
    MetricsReport report;
    MetricsReport benchmark;
    BacktestResult backtest;
};

Evaluation evaluate_scores(const Matrix& scores, const Matrix& returns, const StrategyConfig& strategy);

}  // namespace s3g

#endif  // S3G_PIPELINE_HPP
