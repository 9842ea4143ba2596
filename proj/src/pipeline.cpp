#include "s3g/pipeline.hpp"

#include <limits>

namespace s3g {

Panel load_or_generate(const RunConfig& cfg) {
    if (!cfg.panel_path.empty()) return load_panel(cfg.panel_path);
    return generate_synthetic(cfg.synthetic);
}

Dataset prepare_dataset(const RunConfig& cfg) {
    Dataset d;
    d.panel = load_or_generate(cfg);
    d.returns = compute_returns(d.panel);
    d.splits = split_windows(make_windows(d.panel, cfg.model.lookback), cfg.split);
    return d;
}

Checkpoint train_model(const RunConfig& cfg, const Dataset& data, const EpochCallback& on_epoch) {
    Model init = init_model(cfg.model, cfg.train.seed);
    return fit(data.splits.train, data.splits.valid, std::move(init), cfg.train, on_epoch);
}

Matrix score_days(const Model& model, const std::vector<WindowBatch>& days, Index n_stocks) {
    Matrix out = Matrix::Constant(static_cast<Index>(days.size()), n_stocks,
                                  std::numeric_limits<double>::quiet_NaN());
    for (std::size_t t = 0; t < days.size(); ++t) {
        const WindowBatch& b = days[t];
        if (b.size() < 2) continue;
        const Vector y = forward(model, b.X);
        for (Index k = 0; k < b.size(); ++k) out(static_cast<Index>(t), b.stocks[k]) = y(k);
    }
    return out;
}

Matrix realized_returns(const std::vector<WindowBatch>& days, Index n_stocks) {
    Matrix out = Matrix::Constant(static_cast<Index>(days.size()), n_stocks,
                                  std::numeric_limits<double>::quiet_NaN());
    for (std::size_t t = 0; t < days.size(); ++t)
        for (Index k = 0; k < days[t].size(); ++k) out(static_cast<Index>(t), days[t].stocks[k]) = days[t].r(k);
    return out;
}

Evaluation evaluate_scores(const Matrix& scores, const Matrix& returns, const StrategyConfig& strategy) {
    const Index n = scores.cols();
    BacktestConfig bc;
    bc.m = strategy.portfolio_size(n);
    bc.n_drop = strategy.drop_budget(n);
    bc.cost = strategy.cost;

    Evaluation ev;
    ev.backtest = run_backtest(scores, returns, bc);
    const RankingMetrics rm = ranking_metrics(scores, returns);
    const PortfolioMetrics pm =
        portfolio_metrics(ev.backtest.state.history, ev.backtest.equity_curve, ev.backtest.benchmark_returns);
    ev.report = make_report(rm, pm, ev.backtest.equity_curve);

    // The benchmark has no scores; its ranking fields stay NaN.
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const PortfolioMetrics bm = portfolio_metrics(ev.backtest.benchmark_returns, ev.backtest.benchmark_equity,
                                                  ev.backtest.benchmark_returns);
    RankingMetrics none;
    none.ic = none.icir = none.rank_ic = none.rank_icir = nan;
    ev.benchmark = make_report(none, bm, ev.backtest.benchmark_equity);
    return ev;
}

}  // namespace s3g
