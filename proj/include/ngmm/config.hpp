#pragma once

#include "ngmm/experiments.hpp"

#include <string>
#include <utility>
#include <vector>

namespace ngmm {

using Setting = std::pair<std::string, std::string>;

/// key = value lines; `[section]` prefixes later keys with "section.".
/// `#` starts a comment. Errors name the line number.
std::vector<Setting> parse_config_text(const std::string& text);
std::vector<Setting> read_config_file(const std::string& path);

/// Keys: lr, epochs, envs_per_step, block, rule, hidden, freeze_noise,
/// init_sigma, init_noise, family.
void apply_fit_setting(FitConfig& fit, const std::string& key, const std::string& value);

/// Top-level keys mirror the option fields; "ngmm." and "baseline." keys go to
/// the respective FitConfig. `full_scale = true` restores 50 x 1000 with 10 reps.
void apply_tradeoff_setting(TradeoffOptions& options, const std::string& key, const std::string& value);
void apply_colored_setting(ColoredOptions& options, const std::string& key, const std::string& value);

std::vector<double> parse_double_list(const std::string& text);
std::vector<std::string> parse_string_list(const std::string& text);
bool parse_bool(const std::string& text);

}  // namespace ngmm
