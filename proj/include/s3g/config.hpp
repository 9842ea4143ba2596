#ifndef S3G_CONFIG_HPP
#define S3G_CONFIG_HPP

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "s3g/data.hpp"
#include "s3g/model.hpp"
#include "s3g/training.hpp"

namespace s3g {

struct SplitConfig {
    // Inclusive ISO end dates. When empty the fractions below apply to the
    // ordered list of window days.
    std::string train_end;
    std::string valid_end;
    double train_frac = 0.6;
    double valid_frac = 0.2;
};

struct StrategyConfig {
    double top_frac = 0.10;
    double drop_frac = 0.03;
    double cost = 0.001;

    int portfolio_size(Index n_stocks) const;
    int drop_budget(Index n_stocks) const;
};

struct RunConfig {
    std::string panel_path;  // empty: generate from `synthetic`
    SyntheticSpec synthetic;
    SplitConfig split;
    ModelConfig model;
    LossConfig train;
    StrategyConfig strategy;
    std::string out_dir = "out";

    void validate() const;
};

RunConfig default_run_config();

// Sets `section.key` from text. Unknown keys and malformed values are config
// errors.
void apply_setting(RunConfig& cfg, const std::string& section, const std::string& key,
                   const std::string& value);

// Flat key-value file with [section] headers; '#' and ';' start comments.
void apply_config_file(RunConfig& cfg, const std::filesystem::path& path);

// Applies S3G_<SECTION>_<KEY>=value overrides (section and key are matched
// case-insensitively; the section is the text up to the first underscore).
void apply_env_overrides(RunConfig& cfg, const std::map<std::string, std::string>& env);
std::map<std::string, std::string> process_environment();

// "follower:leader:lag:beta" entries separated by commas.
std::vector<PlantedLink> parse_links(const std::string& text);
std::string format_links(const std::vector<PlantedLink>& links);

struct Splits {
    std::vector<WindowBatch> train;
    std::vector<WindowBatch> valid;
    std::vector<WindowBatch> test;
};

Splits split_windows(std::vector<WindowBatch> windows, const SplitConfig& cfg);

}  // namespace s3g

#endif  // S3G_CONFIG_HPP
