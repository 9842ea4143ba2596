#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include <CLI11.hpp>

#include "s3g/pipeline.hpp"

namespace fs = std::filesystem;
using namespace s3g;

namespace {

struct Options {
    std::string config;
    std::optional<std::uint64_t> seed;
    bool no_wdn = false;
    bool no_ssgl = false;
    bool oracle = false;
    std::string out;
    std::string checkpoint;
    std::string scores;
};

void add_common(CLI::App* cmd, Options& o) {
    cmd->add_option("--config", o.config, "INI config file");
    cmd->add_option("--seed", o.seed, "random seed");
    cmd->add_flag("--no-wdn", o.no_wdn, "disable wavelet denoising");
    cmd->add_flag("--no-ssgl", o.no_ssgl, "disable the state-space graph recurrence");
    cmd->add_option("--out", o.out, "output directory");
}

RunConfig resolve(const Options& o, bool seed_is_synthetic) {
    RunConfig cfg = default_run_config();
    if (!o.config.empty()) apply_config_file(cfg, o.config);
    apply_env_overrides(cfg, process_environment());
    if (o.seed) {
        if (seed_is_synthetic) cfg.synthetic.seed = *o.seed;
        else cfg.train.seed = *o.seed;
    }
    if (o.no_wdn) cfg.model.use_wdn = false;
    if (o.no_ssgl) cfg.model.use_ssgl = false;
    if (!o.out.empty()) cfg.out_dir = o.out;
    cfg.validate();
    return cfg;
}

fs::path out_dir(const RunConfig& cfg) {
    fs::path dir(cfg.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec && fs::is_directory(dir), ErrorCode::Io, "cannot create output directory " + dir.string());
    return dir;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    require(out.good(), ErrorCode::Io, "cannot write " + path.string());
    out << text;
    require(out.good(), ErrorCode::Io, "write failed for " + path.string());
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

int cmd_synth(const Options& o) {
    RunConfig cfg = resolve(o, true);
    require(cfg.panel_path.empty(), ErrorCode::Config, "synth needs a synthetic spec, not data.panel");
    const Panel panel = generate_synthetic(cfg.synthetic);
    const fs::path path = out_dir(cfg) / "panel.csv";
    write_panel_csv(panel, path);
    std::cout << "wrote " << path.string() << " (" << panel.num_stocks() << " stocks x " << panel.num_days()
              << " days, seed " << cfg.synthetic.seed << ")\n";
    std::cout << "planted edges: " << cfg.synthetic.followers.size() << "\n";
    for (const PlantedLink& l : cfg.synthetic.followers)
        std::cout << "edge " << panel.symbols[l.leader] << " -> " << panel.symbols[l.follower] << " lag " << l.lag
                  << " beta " << l.beta << "\n";
    return 0;
}

int cmd_train(const Options& o) {
    RunConfig cfg = resolve(o, false);
    const Dataset data = prepare_dataset(cfg);
    const fs::path dir = out_dir(cfg);
    std::cout << "windows train/valid/test: " << data.splits.train.size() << "/" << data.splits.valid.size()
              << "/" << data.splits.test.size() << "\n";

    std::ostringstream log;
    log << "epoch,train_loss,valid_loss,valid_ic,improved\n";
    const Checkpoint best = train_model(cfg, data, [&](const EpochLog& e) {
        log << e.epoch << ',' << fmt(e.train_loss) << ',' << fmt(e.valid_loss) << ',' << fmt(e.valid_ic) << ','
            << (e.improved ? 1 : 0) << '\n';
        std::printf("epoch %3d  train %.6g  valid %.6g  ic %+.4f%s\n", e.epoch, e.train_loss, e.valid_loss,
                    e.valid_ic, e.improved ? "  *" : "");
    });
    save_checkpoint(best, dir / "model.ckpt");
    write_text(dir / "train_log.csv", log.str());
    std::printf("best epoch %d, valid ic %+.4f; wrote %s\n", best.epoch, best.valid_ic,
                (dir / "model.ckpt").string().c_str());
    return 0;
}

void write_scores_csv(const fs::path& path, const Panel& panel, const std::vector<WindowBatch>& days,
                      const Matrix& scores, const Matrix& returns) {
    std::ostringstream out;
    out << "date,symbol,score,return\n";
    for (Index t = 0; t < scores.rows(); ++t)
        for (Index i = 0; i < scores.cols(); ++i) {
            if (!std::isfinite(returns(t, i))) continue;
            out << days[t].date << ',' << panel.symbols[i] << ',' << fmt(scores(t, i)) << ','
                << fmt(returns(t, i)) << '\n';
        }
    write_text(path, out.str());
}

int cmd_backtest(const Options& o) {
    RunConfig cfg = resolve(o, false);
    const Dataset data = prepare_dataset(cfg);
    const fs::path dir = out_dir(cfg);
    const auto& test = data.splits.test;
    const Index n = data.panel.num_stocks();

    const Matrix returns = realized_returns(test, n);
    Matrix scores;
    std::string label = "model";
    if (o.oracle) {
        scores = returns;
        label = "oracle";
    } else {
        const fs::path ckpt = o.checkpoint.empty() ? dir / "model.ckpt" : fs::path(o.checkpoint);
        const Checkpoint loaded = load_checkpoint(ckpt, cfg.model);
        scores = score_days(loaded.model, test, n);
        label = cfg.model.use_wdn && cfg.model.use_ssgl ? "S3G"
                : cfg.model.use_ssgl                    ? "w/o WDN"
                : cfg.model.use_wdn                     ? "w/o SSGL"
                                                        : "w/o both";
    }

    const Evaluation ev = evaluate_scores(scores, returns, cfg.strategy);
    std::vector<std::string> dates;
    for (const WindowBatch& b : test) dates.push_back(b.date);
    write_text(dir / "report.json", report_json(ev.report));
    write_text(dir / "benchmark_report.json", report_json(ev.benchmark));
    write_holdings_csv(ev.backtest, dates, data.panel.symbols, dir / "holdings.csv");
    write_scores_csv(dir / "scores.csv", data.panel, test, scores, returns);

    std::cout << report_table(ev.report, label);
    std::printf("final equity %.6f, benchmark %.6f; held days %zu\n", ev.backtest.equity_curve.back(),
                ev.backtest.benchmark_equity.back(), ev.backtest.held_days.size());
    return 0;
}

int cmd_eval_metrics(const Options& o) {
    RunConfig cfg = resolve(o, false);
    const fs::path dir = out_dir(cfg);
    const fs::path path = o.scores.empty() ? dir / "scores.csv" : fs::path(o.scores);
    std::ifstream in(path);
    require(in.good(), ErrorCode::Io, "cannot open " + path.string());

    // date,symbol,score,return rows; days and symbols in first-seen order.
    std::map<std::string, Index> day_ix, sym_ix;
    std::vector<std::string> day_names;
    std::vector<std::tuple<Index, Index, double, double>> rows;
    std::string line;
    std::getline(in, line);
    require(line.rfind("date,symbol,score,return", 0) == 0, ErrorCode::Parse,
            path.string() + ": expected header date,symbol,score,return");
    for (int lineno = 2; std::getline(in, line); ++lineno) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string date, sym, s, r;
        std::getline(ss, date, ',');
        std::getline(ss, sym, ',');
        std::getline(ss, s, ',');
        std::getline(ss, r, ',');
        double sv = 0.0, rv = 0.0;
        try {
            sv = s == "nan" ? std::numeric_limits<double>::quiet_NaN() : std::stod(s);
            rv = std::stod(r);
        } catch (const std::exception&) {
            throw Error(ErrorCode::Parse, path.string() + ":" + std::to_string(lineno) + ": bad number");
        }
        auto [d, dnew] = day_ix.try_emplace(date, static_cast<Index>(day_ix.size()));
        if (dnew) day_names.push_back(date);
        auto [k, knew] = sym_ix.try_emplace(sym, static_cast<Index>(sym_ix.size()));
        (void)knew;
        rows.emplace_back(d->second, k->second, sv, rv);
    }
    require(!rows.empty(), ErrorCode::Data, path.string() + ": no rows");

    const double nan = std::numeric_limits<double>::quiet_NaN();
    Matrix scores = Matrix::Constant(static_cast<Index>(day_ix.size()), static_cast<Index>(sym_ix.size()), nan);
    Matrix returns = scores;
    for (const auto& [d, k, sv, rv] : rows) {
        scores(d, k) = sv;
        returns(d, k) = rv;
    }
    const Evaluation ev = evaluate_scores(scores, returns, cfg.strategy);
    write_text(dir / "metrics_report.json", report_json(ev.report));
    std::cout << report_table(ev.report, "scores");
    return 0;
}

int cmd_grad_check(const Options& o) {
    RunConfig cfg = resolve(o, false);
    ModelConfig mc;
    mc.features = 3;
    mc.lookback = 8;
    mc.patches = 2;
    mc.hidden = 4;
    mc.ffn_hidden = 4;
    mc.kernel_width = cfg.model.kernel_width;
    mc.bandwidth = cfg.model.bandwidth;
    mc.use_wdn = cfg.model.use_wdn;
    mc.use_ssgl = cfg.model.use_ssgl;

    std::mt19937_64 rng(cfg.train.seed);
    std::normal_distribution<double> g(0.0, 1.0);
    WindowBatch batch;
    for (Index i = 0; i < 4; ++i) {
        batch.stocks.push_back(i);
        batch.X.push_back(Matrix::NullaryExpr(mc.lookback, mc.features, [&] { return g(rng); }));
    }
    batch.r = Vector::NullaryExpr(4, [&] { return 0.02 * g(rng); });

    const Model model = init_model(mc, cfg.train.seed);
    const GradCheckResult res = grad_check(model, batch, cfg.train.eta, 1e-5, cfg.train.mse_weight);
    std::printf("checked %zu entries; max relative error %.3e at %s[%ld] (analytic %.6e, numeric %.6e)\n",
                res.checked, res.max_rel_error, res.worst_param.c_str(), static_cast<long>(res.worst_index),
                res.analytic, res.numeric);
    require(res.max_rel_error < 1e-3, ErrorCode::GradCheck, "max relative error " + fmt(res.max_rel_error));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"S3G stock trend pipeline"};
    app.require_subcommand(1);
    Options o;

    auto* synth = app.add_subcommand("synth", "generate a synthetic panel with planted lead-lag links");
    add_common(synth, o);
    auto* train = app.add_subcommand("train", "fit the model and write a checkpoint");
    add_common(train, o);
    auto* backtest = app.add_subcommand("backtest", "score the test split and run the Topk-Drop backtest");
    add_common(backtest, o);
    backtest->add_flag("--oracle-scores", o.oracle, "score with realized returns (perfect foresight)");
    backtest->add_option("--checkpoint", o.checkpoint, "checkpoint path (default OUT/model.ckpt)");
    auto* eval = app.add_subcommand("eval-metrics", "compute the metric report from a scores CSV");
    add_common(eval, o);
    eval->add_option("--scores", o.scores, "date,symbol,score,return CSV (default OUT/scores.csv)");
    auto* gc = app.add_subcommand("grad-check", "finite-difference check of the analytic gradients");
    add_common(gc, o);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);
        std::cerr << "error: E_USAGE: " << e.what() << "\n";
        return 2;
    }

    try {
        if (synth->parsed()) return cmd_synth(o);
        if (train->parsed()) return cmd_train(o);
        if (backtest->parsed()) return cmd_backtest(o);
        if (eval->parsed()) return cmd_eval_metrics(o);
        if (gc->parsed()) return cmd_grad_check(o);
    } catch (const Error& e) {
        std::cerr << "error: " << error_code_name(e.code()) << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: E_INTERNAL: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
