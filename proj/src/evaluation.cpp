#include "s3g/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

namespace s3g {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean(const std::vector<double>& v) {
    return v.empty() ? kNaN : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double pop_std(const std::vector<double>& v) {
    if (v.empty()) return kNaN;
    // A constant series has exactly zero spread; the summed mean need not
    // reproduce the constant bit for bit.
    const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    if (*lo == *hi) return 0.0;
    const double mu = mean(v);
    double ss = 0.0;
    for (double x : v) ss += (x - mu) * (x - mu);
    return std::sqrt(ss / static_cast<double>(v.size()));
}

}  // namespace

double pearson(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
    if (a.size() != b.size() || a.size() < 2) return kNaN;
    const Eigen::ArrayXd da = a.array() - a.mean();
    const Eigen::ArrayXd db = b.array() - b.mean();
    const double va = da.square().sum();
    const double vb = db.square().sum();
    if (!(va > 0.0) || !(vb > 0.0)) return kNaN;
    return (da * db).sum() / std::sqrt(va * vb);
}

Vector average_ranks(const Eigen::Ref<const Vector>& x) {
    const Index n = x.size();
    std::vector<Index> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](Index i, Index j) { return x(i) < x(j); });
    Vector ranks(n);
    for (Index k = 0; k < n;) {
        Index e = k;
        while (e + 1 < n && x(idx[e + 1]) == x(idx[k])) ++e;
        const double avg = 0.5 * static_cast<double>(k + e) + 1.0;
        for (Index q = k; q <= e; ++q) ranks(idx[q]) = avg;
        k = e + 1;
    }
    return ranks;
}

double spearman(const Eigen::Ref<const Vector>& a, const Eigen::Ref<const Vector>& b) {
    return pearson(average_ranks(a), average_ranks(b));
}

double information_ratio(const std::vector<double>& series) {
    const double sd = pop_std(series);
    if (!(sd > 0.0)) return kNaN;
    return mean(series) / sd;
}

RankingMetrics ranking_metrics(const Matrix& preds, const Matrix& actuals) {
    require(preds.rows() == actuals.rows() && preds.cols() == actuals.cols(), ErrorCode::Shape,
            "ranking_metrics: prediction and actual matrices differ in shape");
    RankingMetrics out;
    for (Index t = 0; t < preds.rows(); ++t) {
        std::vector<double> p, a;
        for (Index i = 0; i < preds.cols(); ++i)
            if (std::isfinite(preds(t, i)) && std::isfinite(actuals(t, i))) {
                p.push_back(preds(t, i));
                a.push_back(actuals(t, i));
            }
        if (p.size() < 3) {
            out.flagged_days.push_back(t);
            continue;
        }
        Eigen::Map<const Vector> pv(p.data(), static_cast<Index>(p.size()));
        Eigen::Map<const Vector> av(a.data(), static_cast<Index>(a.size()));
        const double ic = pearson(pv, av);
        if (std::isnan(ic)) {
            out.flagged_days.push_back(t);
            continue;
        }
        out.daily_ic.push_back(ic);
        out.daily_rank_ic.push_back(spearman(pv, av));
    }
    out.ic = mean(out.daily_ic);
    out.rank_ic = mean(out.daily_rank_ic);
    out.icir = information_ratio(out.daily_ic);
    out.rank_icir = information_ratio(out.daily_rank_ic);
    return out;
}

std::vector<Index> rank_order(const Eigen::Ref<const Vector>& scores) {
    std::vector<Index> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](Index i, Index j) {
        const bool fi = std::isfinite(scores(i)), fj = std::isfinite(scores(j));
        if (fi != fj) return fi;
        if (!fi) return false;
        return scores(i) > scores(j);
    });
    return order;
}

Rebalance topk_drop_rebalance(const std::vector<Index>& prev, const Eigen::Ref<const Vector>& scores,
                              int m, int n_drop) {
    require(m >= 1 && n_drop >= 0 && n_drop <= m, ErrorCode::Config,
            "topk_drop: need 1 <= m and 0 <= n_drop <= m");
    const Index n = scores.size();
    const Index scorable = (scores.array().isFinite()).count();
    if (scorable < m) return {prev, true};

    const std::vector<Index> order = rank_order(scores);
    std::vector<Index> pos(n);
    for (Index k = 0; k < n; ++k) pos[order[k]] = std::isfinite(scores(order[k])) ? k : n;

    std::vector<bool> incumbent(n, false);
    for (Index i : prev) incumbent.at(i) = true;

    std::vector<Index> keep(prev);
    std::vector<Index> outside;
    for (Index i : prev)
        if (pos[i] >= m) outside.push_back(i);
    // Worst first.
    std::sort(outside.begin(), outside.end(), [&](Index a, Index b) {
        return pos[a] != pos[b] ? pos[a] > pos[b] : a > b;
    });
    const std::size_t drops = std::min<std::size_t>(static_cast<std::size_t>(n_drop), outside.size());
    for (std::size_t k = 0; k < drops; ++k)
        keep.erase(std::find(keep.begin(), keep.end(), outside[k]));

    // Refill with the best non-incumbents (first day: plain top m).
    for (Index k = 0; k < n && static_cast<int>(keep.size()) < m; ++k) {
        const Index i = order[k];
        if (!incumbent[i] && pos[i] < n) keep.push_back(i);
    }
    std::sort(keep.begin(), keep.end());
    return {keep, false};
}

BacktestResult run_backtest(const Matrix& scores, const Matrix& returns, const BacktestConfig& cfg,
                            const std::vector<Index>& initial) {
    require(scores.rows() == returns.rows() && scores.cols() == returns.cols(), ErrorCode::Shape,
            "run_backtest: scores and returns differ in shape");
    require(cfg.m >= 1 && cfg.m <= scores.cols(), ErrorCode::Config,
            "run_backtest: m must be in [1, N]");
    require(cfg.n_drop >= 0 && cfg.n_drop <= cfg.m, ErrorCode::Config,
            "run_backtest: n_drop must be in [0, m]");
    require(cfg.cost >= 0.0, ErrorCode::Config, "run_backtest: cost must be >= 0");

    BacktestResult res;
    res.state.holdings = initial;
    std::sort(res.state.holdings.begin(), res.state.holdings.end());
    res.equity_curve.push_back(1.0);
    res.benchmark_equity.push_back(1.0);
    double bench = 1.0;
    for (Index t = 0; t < scores.rows(); ++t) {
        Rebalance rb = topk_drop_rebalance(res.state.holdings, scores.row(t).transpose(), cfg.m, cfg.n_drop);
        if (rb.held) res.held_days.push_back(t);
        int replaced = 0;
        for (Index i : rb.holdings)
            if (!std::binary_search(res.state.holdings.begin(), res.state.holdings.end(), i)) ++replaced;

        double gross = 0.0;
        bool nan_seen = false;
        for (Index i : rb.holdings) {
            const double r = returns(t, i);
            if (std::isfinite(r))
                gross += r;
            else
                nan_seen = true;
        }
        if (nan_seen) res.nan_return_days.push_back(t);
        if (!rb.holdings.empty()) gross /= static_cast<double>(rb.holdings.size());
        const double net = gross - cfg.cost * 2.0 * static_cast<double>(replaced) / cfg.m;

        res.state.holdings = std::move(rb.holdings);
        res.state.equity *= 1.0 + net;
        res.state.history.push_back(net);
        res.equity_curve.push_back(res.state.equity);
        res.holdings.push_back(res.state.holdings);
        res.turnover.push_back(replaced);

        double bsum = 0.0;
        int bcount = 0;
        for (Index i = 0; i < returns.cols(); ++i)
            if (std::isfinite(returns(t, i))) {
                bsum += returns(t, i);
                ++bcount;
            }
        const double br = bcount ? bsum / bcount : 0.0;
        bench *= 1.0 + br;
        res.benchmark_returns.push_back(br);
        res.benchmark_equity.push_back(bench);
    }
    return res;
}

double max_drawdown(const std::vector<double>& equity) {
    double peak = -std::numeric_limits<double>::infinity();
    double mdd = 0.0;
    for (double e : equity) {
        peak = std::max(peak, e);
        mdd = std::min(mdd, (e - peak) / peak);
    }
    return mdd;
}

PortfolioMetrics portfolio_metrics(const std::vector<double>& daily_returns,
                                   const std::vector<double>& equity,
                                   const std::vector<double>& benchmark_returns) {
    require(daily_returns.size() >= 2, ErrorCode::Config, "portfolio_metrics: need at least 2 days");
    PortfolioMetrics pm;
    pm.arr = mean(daily_returns) * kTradingDaysPerYear;
    pm.avol = pop_std(daily_returns) * std::sqrt(kTradingDaysPerYear);
    pm.mdd = max_drawdown(equity);
    pm.asr = pm.avol > 0.0 ? pm.arr / pm.avol : kNaN;
    if (benchmark_returns.size() == daily_returns.size()) {
        std::vector<double> excess(daily_returns.size());
        for (std::size_t k = 0; k < excess.size(); ++k) excess[k] = daily_returns[k] - benchmark_returns[k];
        pm.ir = information_ratio(excess) * std::sqrt(kTradingDaysPerYear);
    } else {
        pm.ir = kNaN;
    }
    return pm;
}

MetricsReport make_report(const RankingMetrics& rm, const PortfolioMetrics& pm,
                          std::vector<double> equity_curve) {
    MetricsReport r;
    r.ic = rm.ic;
    r.icir = rm.icir;
    r.rank_ic = rm.rank_ic;
    r.rank_icir = rm.rank_icir;
    r.arr = pm.arr;
    r.avol = pm.avol;
    r.mdd = pm.mdd;
    r.asr = pm.asr;
    r.ir = pm.ir;
    r.equity_curve = std::move(equity_curve);
    return r;
}

namespace {

nlohmann::ordered_json number(double v) {
    return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

double from_json(const nlohmann::json& j) { return j.is_null() ? kNaN : j.get<double>(); }

}  // namespace

std::string report_json(const MetricsReport& r) {
    nlohmann::ordered_json j;
    j["ic"] = number(r.ic);
    j["icir"] = number(r.icir);
    j["rank_ic"] = number(r.rank_ic);
    j["rank_icir"] = number(r.rank_icir);
    j["arr"] = number(r.arr);
    j["avol"] = number(r.avol);
    j["mdd"] = number(r.mdd);
    j["asr"] = number(r.asr);
    j["ir"] = number(r.ir);
    nlohmann::ordered_json curve = nlohmann::ordered_json::array();
    for (double e : r.equity_curve) curve.push_back(number(e));
    j["equity_curve"] = std::move(curve);
    return j.dump(2) + "\n";
}

MetricsReport parse_report_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Parse, std::string("report: ") + e.what());
    }
    MetricsReport r;
    try {
        r.ic = from_json(j.at("ic"));
        r.icir = from_json(j.at("icir"));
        r.rank_ic = from_json(j.at("rank_ic"));
        r.rank_icir = from_json(j.at("rank_icir"));
        r.arr = from_json(j.at("arr"));
        r.avol = from_json(j.at("avol"));
        r.mdd = from_json(j.at("mdd"));
        r.asr = from_json(j.at("asr"));
        r.ir = from_json(j.at("ir"));
        for (const auto& e : j.at("equity_curve")) r.equity_curve.push_back(from_json(e));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Parse, std::string("report: ") + e.what());
    }
    return r;
}

std::string report_table(const MetricsReport& r, const std::string& label) {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "%-12s | %7s %7s %7s %9s | %7s %7s %7s %7s %7s\n"
                  "%-12s | %7.3f %7.3f %7.3f %9.3f | %7.3f %7.3f %7.3f %7.3f %7.3f\n",
                  "Method", "IC", "ICIR", "RankIC", "RankICIR", "ARR", "AVol", "MDD", "ASR", "IR",
                  label.c_str(), r.ic, r.icir, r.rank_ic, r.rank_icir, r.arr, r.avol, r.mdd, r.asr, r.ir);
    return buf;
}

void write_holdings_csv(const BacktestResult& result, const std::vector<std::string>& dates,
                        const std::vector<std::string>& symbols, const std::filesystem::path& path) {
    std::ofstream out(path);
    require(out.good(), ErrorCode::Io, "cannot write " + path.string());
    out << "date,net_return,benchmark_return,turnover,holdings\n";
    char buf[64];
    for (std::size_t t = 0; t < result.holdings.size(); ++t) {
        out << (t < dates.size() ? dates[t] : std::to_string(t));
        std::snprintf(buf, sizeof buf, ",%.17g,%.17g,%d,", result.state.history[t],
                      result.benchmark_returns[t], result.turnover[t]);
        out << buf;
        for (std::size_t k = 0; k < result.holdings[t].size(); ++k) {
            if (k) out << ' ';
            const Index i = result.holdings[t][k];
            out << (static_cast<std::size_t>(i) < symbols.size() ? symbols[i] : std::to_string(i));
        }
        out << '\n';
    }
}

}  // namespace s3g
