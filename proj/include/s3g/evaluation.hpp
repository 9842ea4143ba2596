#ifndef S3G_EVALUATION_HPP
#define S3G_EVALUATION_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "s3g/common.hpp"

namespace s3g {

inline constexpr double kTradingDaysPerYear = 252.0;

// Pearson correlation; NaN when either side has zero variance or fewer than
// two entries.
double pearson(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b);
// 1-based ranks, ties share their average rank.
Vector average_ranks(const Eigen::Ref<const Vector>& x);
double spearman(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b);

struct RankingMetrics {
    double ic = 0.0;
    double icir = 0.0;
    double rank_ic = 0.0;
    double rank_icir = 0.0;
    std::vector<double> daily_ic;
    std::vector<double> daily_rank_ic;
    // Days skipped: fewer than 3 jointly finite stocks or zero variance.
    std::vector<Index> flagged_days;
};

// days x N matrices; NaN entries are excluded stock-by-stock per day.
RankingMetrics ranking_metrics(const Matrix& preds, const Matrix& actuals);

// Mean over population std; NaN when the std is zero.
double information_ratio(const std::vector<double>& series);

struct Rebalance {
    std::vector<Index> holdings;  // ascending stock index
    bool held = false;            // too few scorable stocks; previous portfolio kept
};

// Topk-Drop: keep at least m - n_drop incumbents and otherwise move toward the
// top m by score. NaN scores are unscorable. Ties break by lower index.
Rebalance topk_drop_rebalance(const std::vector<Index>& prev, const Eigen::Ref<const Vector>& scores,
                              int m, int n_drop);

// Stock indices ordered best first (score descending, index ascending); NaN last.
std::vector<Index> rank_order(const Eigen::Ref<const Vector>& scores);

struct PortfolioState {
    std::vector<Index> holdings;
    double equity = 1.0;
    std::vector<double> history;  // daily net returns
};

struct BacktestResult {
    PortfolioState state;
    std::vector<double> equity_curve;        // after each day
    std::vector<double> benchmark_returns;   // equal weight over the universe
    std::vector<double> benchmark_equity;
    std::vector<std::vector<Index>> holdings;
    std::vector<int> turnover;               // replaced positions per day
    std::vector<Index> held_days;            // rebalance skipped
    std::vector<Index> nan_return_days;      // a held stock had a NaN return
};

struct BacktestConfig {
    int m = 1;
    int n_drop = 1;
    double cost = 0.001;  // per leg
};

// scores(t, i) must only use data through t-1; returns(t, i) is realized on t.
// `initial` is the portfolio held before the first day (empty = start in cash).
BacktestResult run_backtest(const Matrix& scores, const Matrix& returns, const BacktestConfig& cfg,
                            const std::vector<Index>& initial = {});

struct PortfolioMetrics {
    double arr = 0.0;
    double avol = 0.0;
    double mdd = 0.0;
    double asr = 0.0;
    double ir = 0.0;
};

double max_drawdown(const std::vector<double>& equity);

PortfolioMetrics portfolio_metrics(const std::vector<double>& daily_returns,
                                   const std::vector<double>& equity,
                                   const std::vector<double>& benchmark_returns);

struct MetricsReport {
    double ic = 0.0, icir = 0.0, rank_ic = 0.0, rank_icir = 0.0;
    double arr = 0.0, avol = 0.0, mdd = 0.0, asr = 0.0, ir = 0.0;
    std::vector<double> equity_curve;
};

MetricsReport make_report(const RankingMetrics& rm, const PortfolioMetrics& pm,
                          std::vector<double> equity_curve);

// JSON object with the nine metric fields plus equity_curve. Non-finite
// values are written as null.
std::string report_json(const MetricsReport& report);
MetricsReport parse_report_json(const std::string& text);
// One-row table in the column order IC ICIR RankIC RankICIR ARR AVol MDD ASR IR.
std::string report_table(const MetricsReport& report, const std::string& label);

void write_holdings_csv(const BacktestResult& result, const std::vector<std::string>& dates,
                        const std::vector<std::string>& symbols, const std::filesystem::path& path);

}  // namespace s3g

#endif  // S3G_EVALUATION_HPP
