#include "s3g/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <cmath>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

extern char** environ;

namespace s3g {

namespace {

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::string strip(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const std::string& where, const std::string& value, const char* expected) {
    throw Error(ErrorCode::Config, where + ": expected " + expected + ", got '" + value + "'");
}

double to_double(const std::string& where, const std::string& v) {
    double out = 0.0;
    const std::string s = strip(v);
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc() || p != s.data() + s.size() || s.empty()) bad_value(where, v, "a number");
    return out;
}

long long to_int(const std::string& where, const std::string& v) {
    long long out = 0;
    const std::string s = strip(v);
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    if (ec != std::errc() || p != s.data() + s.size() || s.empty()) bad_value(where, v, "an integer");
    return out;
}

bool to_bool(const std::string& where, const std::string& v) {
    const std::string s = lower(strip(v));
    if (s == "1" || s == "true" || s == "yes" || s == "on") return true;
    if (s == "0" || s == "false" || s == "no" || s == "off") return false;
    bad_value(where, v, "a boolean");
}

std::vector<std::string> split_list(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, sep)) {
        item = strip(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

}  // namespace

int StrategyConfig::portfolio_size(Index n_stocks) const {
    return std::max(1, static_cast<int>(std::lround(top_frac * static_cast<double>(n_stocks))));
}

int StrategyConfig::drop_budget(Index n_stocks) const {
    const int n = std::max(1, static_cast<int>(std::lround(drop_frac * static_cast<double>(n_stocks))));
    return std::min(n, portfolio_size(n_stocks));
}

RunConfig default_run_config() {
    RunConfig cfg;
    cfg.synthetic.leaders = {0};
    cfg.synthetic.followers = {PlantedLink{1, 0, 1, 0.8}};
    return cfg;
}

void RunConfig::validate() const {
    model.validate();
    train.validate();
    if (panel_path.empty()) validate_synthetic_spec(synthetic);
    require(split.train_frac > 0.0 && split.valid_frac > 0.0 && split.train_frac + split.valid_frac < 1.0,
            ErrorCode::Config, "split fractions must be positive and sum below 1");
    require(split.train_end.empty() == split.valid_end.empty(), ErrorCode::Config,
            "split.train_end and split.valid_end must be set together");
    require(split.train_end.empty() || split.train_end < split.valid_end, ErrorCode::Config,
            "split.train_end must precede split.valid_end");
    require(strategy.top_frac > 0.0 && strategy.top_frac <= 1.0, ErrorCode::Config,
            "strategy.top_frac must be in (0, 1]");
    require(strategy.drop_frac >= 0.0 && strategy.drop_frac <= 1.0, ErrorCode::Config,
            "strategy.drop_frac must be in [0, 1]");
    require(strategy.cost >= 0.0, ErrorCode::Config, "strategy.cost must be >= 0");
}

std::vector<PlantedLink> parse_links(const std::string& text) {
    std::vector<PlantedLink> out;
    for (const std::string& item : split_list(text, ',')) {
        auto parts = split_list(item, ':');
        if (parts.size() != 4) bad_value("synthetic.followers", item, "follower:leader:lag:beta");
        PlantedLink link;
        link.follower = static_cast<int>(to_int("synthetic.followers", parts[0]));
        link.leader = static_cast<int>(to_int("synthetic.followers", parts[1]));
        link.lag = static_cast<int>(to_int("synthetic.followers", parts[2]));
        link.beta = to_double("synthetic.followers", parts[3]);
        out.push_back(link);
    }
    return out;
}

std::string format_links(const std::vector<PlantedLink>& links) {
    std::string out;
    for (const PlantedLink& l : links) {
        if (!out.empty()) out += ',';
        std::ostringstream ss;
        ss << l.follower << ':' << l.leader << ':' << l.lag << ':' << l.beta;
        out += ss.str();
    }
    return out;
}

void apply_setting(RunConfig& cfg, const std::string& section_in, const std::string& key_in,
                   const std::string& value) {
    const std::string section = lower(strip(section_in));
    const std::string key = lower(strip(key_in));
    const std::string where = section + "." + key;
    auto is = [&](const char* s, const char* k) { return section == s && key == k; };

    if (is("data", "panel")) cfg.panel_path = strip(value);
    else if (is("synthetic", "n_stocks")) cfg.synthetic.n_stocks = static_cast<int>(to_int(where, value));
    else if (is("synthetic", "n_days")) cfg.synthetic.n_days = static_cast<int>(to_int(where, value));
    else if (is("synthetic", "noise_sigma")) cfg.synthetic.noise_sigma = to_double(where, value);
    else if (is("synthetic", "seed")) cfg.synthetic.seed = static_cast<std::uint64_t>(to_int(where, value));
    else if (is("synthetic", "leaders")) {
        cfg.synthetic.leaders.clear();
        for (const std::string& s : split_list(value, ','))
            cfg.synthetic.leaders.push_back(static_cast<int>(to_int(where, s)));
    } else if (is("synthetic", "followers")) cfg.synthetic.followers = parse_links(value);
    else if (is("split", "train_end")) cfg.split.train_end = strip(value);
    else if (is("split", "valid_end")) cfg.split.valid_end = strip(value);
    else if (is("split", "train_frac")) cfg.split.train_frac = to_double(where, value);
    else if (is("split", "valid_frac")) cfg.split.valid_frac = to_double(where, value);
    else if (is("model", "lookback")) cfg.model.lookback = static_cast<int>(to_int(where, value));
    else if (is("model", "patches")) cfg.model.patches = static_cast<int>(to_int(where, value));
    else if (is("model", "hidden")) cfg.model.hidden = static_cast<int>(to_int(where, value));
    else if (is("model", "ffn_hidden")) cfg.model.ffn_hidden = static_cast<int>(to_int(where, value));
    else if (is("model", "kernel_width")) cfg.model.kernel_width = static_cast<int>(to_int(where, value));
    else if (is("model", "sigma")) {
        if (lower(strip(value)) == "median") {
            cfg.model.bandwidth = Bandwidth{true, 1.0};
        } else {
            cfg.model.bandwidth = Bandwidth{false, to_double(where, value)};
        }
    } else if (is("model", "no_wdn")) cfg.model.use_wdn = !to_bool(where, value);
    else if (is("model", "no_ssgl")) cfg.model.use_ssgl = !to_bool(where, value);
    else if (is("train", "learning_rate")) cfg.train.learning_rate = to_double(where, value);
    else if (is("train", "eta")) cfg.train.eta = to_double(where, value);
    else if (is("train", "mse_weight")) cfg.train.mse_weight = to_double(where, value);
    else if (is("train", "epochs")) cfg.train.max_epochs = static_cast<int>(to_int(where, value));
    else if (is("train", "patience")) cfg.train.patience = static_cast<int>(to_int(where, value));
    else if (is("train", "seed")) cfg.train.seed = static_cast<std::uint64_t>(to_int(where, value));
    else if (is("train", "pair_samples")) cfg.train.pair_samples = static_cast<int>(to_int(where, value));
    else if (is("train", "optimizer")) {
        const std::string v = lower(strip(value));
        if (v == "adam") cfg.train.optimizer = Optimizer::Adam;
        else if (v == "sgd") cfg.train.optimizer = Optimizer::Sgd;
        else bad_value(where, value, "adam or sgd");
    } else if (is("strategy", "top_frac")) cfg.strategy.top_frac = to_double(where, value);
    else if (is("strategy", "drop_frac")) cfg.strategy.drop_frac = to_double(where, value);
    else if (is("strategy", "cost")) cfg.strategy.cost = to_double(where, value);
    else if (is("output", "dir")) cfg.out_dir = strip(value);
    else throw Error(ErrorCode::Config, "unknown config key '" + where + "'");
}

void apply_config_file(RunConfig& cfg, const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::Io, "cannot open config " + path.string());
    // The INI reader only knows ';' comments.
    std::stringstream text;
    for (std::string line; std::getline(in, line);) {
        if (auto p = line.find('#'); p != std::string::npos) line.erase(p);
        text << line << '\n';
    }
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(text, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw Error(ErrorCode::Config, std::string("config: ") + e.what());
    }
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw Error(ErrorCode::Config, "config: key '" + section + "' outside a section");
        for (const auto& [key, value] : body) {
            std::string v = value.data();
            if (auto p = v.find(';'); p != std::string::npos) v.erase(p);
            apply_setting(cfg, section, key, v);
        }
    }
}

std::map<std::string, std::string> process_environment() {
    std::map<std::string, std::string> env;
    for (char** e = environ; e && *e; ++e) {
        std::string s(*e);
        if (auto eq = s.find('='); eq != std::string::npos) env[s.substr(0, eq)] = s.substr(eq + 1);
    }
    return env;
}

void apply_env_overrides(RunConfig& cfg, const std::map<std::string, std::string>& env) {
    constexpr std::string_view prefix = "S3G_";
    for (const auto& [name, value] : env) {
        if (name.rfind(prefix, 0) != 0) continue;
        const std::string rest = name.substr(prefix.size());
        const auto us = rest.find('_');
        if (us == std::string::npos || us == 0 || us + 1 == rest.size())
            throw Error(ErrorCode::Config, "malformed override variable " + name);
        apply_setting(cfg, rest.substr(0, us), rest.substr(us + 1), value);
    }
}

Splits split_windows(std::vector<WindowBatch> windows, const SplitConfig& cfg) {
    Splits s;
    const std::size_t total = windows.size();
    if (!cfg.train_end.empty()) {
        for (WindowBatch& w : windows) {
            if (w.date <= cfg.train_end) s.train.push_back(std::move(w));
            else if (w.date <= cfg.valid_end) s.valid.push_back(std::move(w));
            else s.test.push_back(std::move(w));
        }
    } else {
        const auto n_train = static_cast<std::size_t>(std::floor(cfg.train_frac * static_cast<double>(total)));
        const auto n_valid = static_cast<std::size_t>(std::floor(cfg.valid_frac * static_cast<double>(total)));
        for (std::size_t k = 0; k < total; ++k) {
            if (k < n_train) s.train.push_back(std::move(windows[k]));
            else if (k < n_train + n_valid) s.valid.push_back(std::move(windows[k]));
            else s.test.push_back(std::move(windows[k]));
        }
    }
    require(!s.train.empty() && !s.valid.empty() && !s.test.empty(), ErrorCode::Config,
            "split leaves an empty train/valid/test set (" + std::to_string(s.train.size()) + "/" +
                std::to_string(s.valid.size()) + "/" + std::to_string(s.test.size()) + ")");
    return s;
}

}  // namespace s3g
