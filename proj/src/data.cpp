#include "s3g/data.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

namespace s3g {

namespace {

std::vector<std::string_view> split(std::string_view line, char delim) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = line.find(delim, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

bool parse_double(std::string_view s, double& out) {
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

bool is_iso_date(std::string_view s) {
    if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
    for (std::size_t i : {0, 1, 2, 3, 5, 6, 8, 9})
        if (s[i] < '0' || s[i] > '9') return false;
    int y = 0, m = 0, d = 0;
    std::from_chars(s.data(), s.data() + 4, y);
    std::from_chars(s.data() + 5, s.data() + 7, m);
    std::from_chars(s.data() + 8, s.data() + 10, d);
    using namespace std::chrono;
    return year_month_day{year{y}, month{static_cast<unsigned>(m)}, day{static_cast<unsigned>(d)}}.ok();
}

std::string format_date(std::chrono::sys_days d) {
    std::chrono::year_month_day ymd{d};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

// Weekday calendar starting on the first Monday of 2015.
std::vector<std::string> business_days(int count) {
    using namespace std::chrono;
    std::vector<std::string> out;
    out.reserve(count);
    sys_days d = sys_days{year{2015} / January / 5};
    while (static_cast<int>(out.size()) < count) {
        weekday wd{d};
        if (wd != Saturday && wd != Sunday) out.push_back(format_date(d));
        d += days{1};
    }
    return out;
}

}  // namespace

Matrix Panel::feature(Feature f) const {
    Matrix out(num_days(), num_stocks());
    for (Index d = 0; d < num_days(); ++d) out.row(d) = values[d].col(f).transpose();
    return out;
}

void validate_panel(const Panel& panel) {
    const Index days = panel.num_days();
    require(static_cast<Index>(panel.values.size()) == days, ErrorCode::Data,
            "panel: values/dates length mismatch");
    for (Index d = 1; d < days; ++d)
        require(panel.dates[d - 1] < panel.dates[d], ErrorCode::Data,
                "panel: dates not strictly increasing at " + panel.dates[d]);
    std::set<std::string> seen(panel.symbols.begin(), panel.symbols.end());
    require(seen.size() == panel.symbols.size(), ErrorCode::Data, "panel: duplicate symbols");
    for (Index d = 0; d < days; ++d) {
        const Matrix& v = panel.values[d];
        require(v.rows() == panel.num_stocks() && v.cols() == kNumFeatures, ErrorCode::Data,
                "panel: bad value shape on " + panel.dates[d]);
        require(v.allFinite(), ErrorCode::Data, "panel: non-finite value on " + panel.dates[d]);
        for (Index i = 0; i < v.rows(); ++i)
            require(v(i, kClose) > 0.0, ErrorCode::Data,
                    "non-positive close for " + panel.symbols[i] + " on " + panel.dates[d]);
    }
}

Panel load_panel(const std::filesystem::path& path, const CsvFormat& format) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::Io, "cannot open panel file " + path.string());

    std::string line;
    require(static_cast<bool>(std::getline(in, line)), ErrorCode::Parse, "line 1: empty file");
    auto header = split(line, format.delimiter);
    std::array<std::size_t, 8> col{};
    for (std::size_t k = 0; k < format.columns.size(); ++k) {
        std::size_t found = header.size();
        for (std::size_t h = 0; h < header.size(); ++h)
            if (trim(header[h]) == format.columns[k]) found = h;
        require(found < header.size(), ErrorCode::Parse,
                "line 1: missing column '" + format.columns[k] + "'");
        col[k] = found;
    }

    struct Row {
        std::string date;
        std::string symbol;
        std::array<double, kNumFeatures> x;
    };
    std::vector<Row> rows;
    std::set<std::string> date_set;
    std::set<std::string> symbol_set;
    std::set<std::pair<std::string, std::string>> keys;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto fields = split(line, format.delimiter);
        const std::string where = "line " + std::to_string(lineno) + ": ";
        require(fields.size() == header.size(), ErrorCode::Parse,
                where + "expected " + std::to_string(header.size()) + " fields, got " +
                    std::to_string(fields.size()));
        Row row;
        row.date = std::string(trim(fields[col[0]]));
        row.symbol = std::string(trim(fields[col[1]]));
        require(is_iso_date(row.date), ErrorCode::Parse, where + "bad date '" + row.date + "'");
        require(!row.symbol.empty(), ErrorCode::Parse, where + "empty symbol");
        for (int f = 0; f < kNumFeatures; ++f)
            require(parse_double(fields[col[2 + f]], row.x[f]), ErrorCode::Parse,
                    where + "bad number in column '" + format.columns[2 + f] + "'");
        require(row.x[kClose] > 0.0 || std::isnan(row.x[kClose]), ErrorCode::Data,
                "non-positive close for " + row.symbol + " on " + row.date);
        require(keys.emplace(row.date, row.symbol).second, ErrorCode::Data,
                where + "duplicate row for " + row.symbol + " on " + row.date);
        date_set.insert(row.date);
        symbol_set.insert(row.symbol);
        rows.push_back(std::move(row));
    }
    require(static_cast<int>(date_set.size()) >= format.min_dates, ErrorCode::InsufficientHistory,
            "panel has " + std::to_string(date_set.size()) + " dates, need at least " +
                std::to_string(format.min_dates));

    Panel panel;
    panel.dates.assign(date_set.begin(), date_set.end());
    panel.symbols.assign(symbol_set.begin(), symbol_set.end());
    const Index days = panel.num_days();
    const Index n = panel.num_stocks();
    std::unordered_map<std::string, Index> date_idx, sym_idx;
    for (Index d = 0; d < days; ++d) date_idx[panel.dates[d]] = d;
    for (Index i = 0; i < n; ++i) sym_idx[panel.symbols[i]] = i;

    panel.values.assign(days, Matrix::Zero(n, kNumFeatures));
    panel.valid = BoolMatrix::Constant(days, n, false);
    for (const Row& row : rows) {
        const Index d = date_idx[row.date];
        const Index i = sym_idx[row.symbol];
        bool finite = true;
        for (double v : row.x) finite = finite && std::isfinite(v);
        if (!finite) continue;  // cleaned: treated as a missing row
        for (int f = 0; f < kNumFeatures; ++f) panel.values[d](i, f) = row.x[f];
        panel.valid(d, i) = true;
    }

    // Forward fill gaps; leading gaps take the first observed row.
    for (Index i = 0; i < n; ++i) {
        Index first = -1;
        for (Index d = 0; d < days && first < 0; ++d)
            if (panel.valid(d, i)) first = d;
        require(first >= 0, ErrorCode::Data, "no finite rows for " + panel.symbols[i]);
        for (Index d = 0; d < first; ++d) panel.values[d].row(i) = panel.values[first].row(i);
        for (Index d = first + 1; d < days; ++d)
            if (!panel.valid(d, i)) panel.values[d].row(i) = panel.values[d - 1].row(i);
    }
    validate_panel(panel);
    return panel;
}

void write_panel_csv(const Panel& panel, const std::filesystem::path& path) {
    std::ofstream out(path);
    require(out.good(), ErrorCode::Io, "cannot write " + path.string());
    out << "date,symbol,open,high,low,close,turnover,volume\n";
    char buf[64];
    for (Index d = 0; d < panel.num_days(); ++d) {
        for (Index i = 0; i < panel.num_stocks(); ++i) {
            if (panel.valid.size() != 0 && !panel.valid(d, i)) continue;
            out << panel.dates[d] << ',' << panel.symbols[i];
            for (int f = 0; f < kNumFeatures; ++f) {
                // %.17g round-trips doubles exactly.
                std::snprintf(buf, sizeof buf, ",%.17g", panel.values[d](i, f));
                out << buf;
            }
            out << '\n';
        }
    }
    require(out.good(), ErrorCode::Io, "write failed for " + path.string());
}

Matrix compute_returns(const Panel& panel) {
    const Matrix close = panel.feature(kClose);
    const Index days = close.rows();
    if (days < 2) return Matrix(0, close.cols());
    return (close.bottomRows(days - 1).array() / close.topRows(days - 1).array() - 1.0).matrix();
}

Matrix zscore_columns(const Matrix& window) {
    const Index rows = window.rows();
    Matrix out(rows, window.cols());
    for (Index c = 0; c < window.cols(); ++c) {
        const double mean = window.col(c).mean();
        const Eigen::ArrayXd centered = window.col(c).array() - mean;
        const double sd = std::sqrt(centered.square().sum() / static_cast<double>(rows));
        if (sd <= 1e-12 * std::max(1.0, std::abs(mean)))
            out.col(c).setZero();
        else
            out.col(c) = (centered / sd).matrix();
    }
    return out;
}

std::vector<WindowBatch> make_windows(const Panel& panel, int lookback) {
    require(lookback >= 1, ErrorCode::Config, "lookback must be >= 1");
    const Index days = panel.num_days();
    require(days >= lookback + 2, ErrorCode::InsufficientHistory,
            "lookback " + std::to_string(lookback) + " needs at least " +
                std::to_string(lookback + 2) + " days, panel has " + std::to_string(days));
    const Matrix returns = compute_returns(panel);
    const Index n = panel.num_stocks();
    const bool have_mask = panel.valid.size() != 0;

    std::vector<WindowBatch> out;
    out.reserve(days - lookback - 1);
    for (Index t = lookback + 1; t < days; ++t) {
        WindowBatch batch;
        batch.day = t;
        batch.date = panel.dates[t];
        std::vector<double> labels;
        for (Index i = 0; i < n; ++i) {
            // Every window day and the label day, plus the day before the
            // window (its close anchors the first return), must be observed.
            bool ok = true;
            if (have_mask)
                for (Index d = t - lookback - 1; d <= t && ok; ++d) ok = panel.valid(d, i);
            if (!ok) continue;
            Matrix window(lookback, kNumFeatures);
            for (int k = 0; k < lookback; ++k) window.row(k) = panel.values[t - lookback + k].row(i);
            batch.stocks.push_back(i);
            batch.X.push_back(zscore_columns(window));
            labels.push_back(returns(t - 1, i));
        }
        batch.r = Eigen::Map<Vector>(labels.data(), static_cast<Index>(labels.size()));
        out.push_back(std::move(batch));
    }
    return out;
}

void validate_synthetic_spec(const SyntheticSpec& spec) {
    require(spec.n_stocks >= 1 && spec.n_days >= 2, ErrorCode::Spec,
            "synthetic spec needs n_stocks >= 1 and n_days >= 2");
    require(spec.noise_sigma > 0.0, ErrorCode::Spec, "noise_sigma must be > 0");
    auto in_range = [&](int i) { return i >= 0 && i < spec.n_stocks; };
    for (int l : spec.leaders)
        require(in_range(l), ErrorCode::Spec, "leader index out of range: " + std::to_string(l));
    std::set<int> followers;
    for (const PlantedLink& link : spec.followers) {
        require(in_range(link.follower) && in_range(link.leader), ErrorCode::Spec,
                "planted link index out of range");
        require(link.follower != link.leader, ErrorCode::Spec,
                "follower " + std::to_string(link.follower) + " equals its leader");
        require(link.lag >= 1 && link.lag <= 5, ErrorCode::Spec, "lag must be in [1, 5]");
        // beta = 0 is accepted as an explicit uncoupled control.
        require(link.beta == 0.0 || (link.beta >= 0.2 && link.beta <= 1.0), ErrorCode::Spec,
                "beta must be 0 or in [0.2, 1.0]");
        require(followers.insert(link.follower).second, ErrorCode::Spec,
                "stock " + std::to_string(link.follower) + " follows more than one leader");
    }
    for (const PlantedLink& link : spec.followers)
        require(!followers.count(link.leader), ErrorCode::Spec,
                "leader " + std::to_string(link.leader) + " is itself a follower");
}

Panel generate_synthetic(const SyntheticSpec& spec) {
    validate_synthetic_spec(spec);
    const int n = spec.n_stocks;
    const int days = spec.n_days;

    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> noise(0.0, spec.noise_sigma);
    // Day 0 has no return; returns(d, i) for d >= 1.
    Matrix returns = Matrix::Zero(days, n);
    for (int d = 1; d < days; ++d)
        for (int i = 0; i < n; ++i) returns(d, i) = noise(rng);
    for (const PlantedLink& link : spec.followers)
        for (int d = 1 + link.lag; d < days; ++d)
            returns(d, link.follower) += link.beta * returns(d - link.lag, link.leader);
    returns = returns.cwiseMax(-0.99);

    Panel panel;
    panel.dates = business_days(days);
    const int width = std::max(3, static_cast<int>(std::to_string(n - 1).size()));
    for (int i = 0; i < n; ++i) {
        std::string id = std::to_string(i);
        panel.symbols.push_back("S" + std::string(width - id.size(), '0') + id);
    }
    panel.values.assign(days, Matrix::Zero(n, kNumFeatures));
    panel.valid = BoolMatrix::Constant(days, n, true);
    Vector close = Vector::Constant(n, 100.0);
    for (int d = 0; d < days; ++d) {
        Matrix& v = panel.values[d];
        v.col(kOpen) = close;
        if (d > 0) close = close.cwiseProduct((1.0 + returns.row(d).array()).matrix().transpose());
        v.col(kClose) = close;
        v.col(kHigh) = 1.01 * close;
        v.col(kLow) = 0.99 * close;
        v.col(kTurnover).setConstant(1.0e6);
        v.col(kVolume).setConstant(1.0e4);
    }
    return panel;
}

double lagged_correlation(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y,
                          int lag) {
    const Index len = std::min(x.size(), y.size()) - lag;
    if (len < 2) return std::numeric_limits<double>::quiet_NaN();
    const Eigen::ArrayXd a = x.head(len).array() - x.head(len).mean();
    const Eigen::ArrayXd b = y.segment(lag, len).array() - y.segment(lag, len).mean();
    return (a * b).sum() / std::sqrt(a.square().sum() * b.square().sum());
}

}  // namespace s3g
