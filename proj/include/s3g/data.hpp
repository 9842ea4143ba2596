#ifndef S3G_DATA_HPP
#define S3G_DATA_HPP

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "s3g/common.hpp"

namespace s3g {

// Feature order inside Panel::values and every window.
enum Feature : int { kOpen = 0, kHigh, kLow, kClose, kTurnover, kVolume };
inline constexpr int kNumFeatures = 6;

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

// dates x symbols x features market panel. values[d] is N x F for day d.
// valid(d, i) is false where stock i had no row on day d; such rows carry the
// last observed values (or the first later one for leading gaps).
struct Panel {
    std::vector<std::string> dates;
    std::vector<std::string> symbols;
    Tensor3 values;
    BoolMatrix valid;

    Index num_days() const { return static_cast<Index>(dates.size()); }
    Index num_stocks() const { return static_cast<Index>(symbols.size()); }
    // days x N matrix of one feature.
    Matrix feature(Feature f) const;
};

// One cross-section example: X[k] is the L x F normalized lookback window of
// stock `stocks[k]` ending the day before `day`; r[k] is that stock's return on
// `day`.
struct WindowBatch {
    Index day = 0;
    std::string date;
    std::vector<Index> stocks;
    Tensor3 X;
    Vector r;

    Index size() const { return static_cast<Index>(stocks.size()); }
};

struct PlantedLink {
    int follower = 0;
    int leader = 0;
    int lag = 1;
    double beta = 0.8;
};

struct SyntheticSpec {
    int n_stocks = 20;
    int n_days = 1000;
    std::vector<int> leaders;
    std::vector<PlantedLink> followers;
    double noise_sigma = 0.01;
    std::uint64_t seed = 7;
};

// Column mapping for CSV ingestion. `columns` names the header fields for
// date, symbol, then the six features in Feature order.
struct CsvFormat {
    std::array<std::string, 8> columns{"date",  "symbol", "open",     "high",
                                       "low",   "close",  "turnover", "volume"};
    char delimiter = ',';
    // Fewer distinct dates than this is an insufficient-history error.
    int min_dates = 22;
};

Panel load_panel(const std::filesystem::path& path, const CsvFormat& format = {});
void write_panel_csv(const Panel& panel, const std::filesystem::path& path);
void validate_panel(const Panel& panel);

// (days - 1) x N close-to-close returns; row t-1 holds the return of day t.
Matrix compute_returns(const Panel& panel);

// One batch per day t with a full lookback of L days t-L..t-1 that all have
// a defined return (so the first day never enters a window). Yields
// days - L - 1 batches.
std::vector<WindowBatch> make_windows(const Panel& panel, int lookback);

// Per-column z-score over the rows of `window`; zero-variance columns map to 0.
Matrix zscore_columns(const Matrix& window);

void validate_synthetic_spec(const SyntheticSpec& spec);
Panel generate_synthetic(const SyntheticSpec& spec);

// Lag-k sample Pearson correlation corr(x[t-k], y[t]).
double lagged_correlation(const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y,
                          int lag);

}  // namespace s3g

#endif  // S3G_DATA_HPP
