#include "ngmm/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ngmm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
  return s;
}

double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw std::invalid_argument("setting '" + key + "': '" + v + "' is not a number");
  return out;
}

long to_long(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long out = 0;
  try {
    out = std::stol(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw std::invalid_argument("setting '" + key + "': '" + v + "' is not an integer");
  return out;
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  std::uint64_t out = 0;
  try {
    if (!v.empty() && v.front() != '-') out = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw std::invalid_argument("setting '" + key + "': '" + v + "' is not a seed");
  return out;
}

}  // namespace

std::vector<Setting> parse_config_text(const std::string& text) {
  std::vector<Setting> out;
  std::stringstream ss(text);
  std::string line, section;
  for (std::size_t line_no = 1; std::getline(ss, line); ++line_no) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw std::invalid_argument("config line " + std::to_string(line_no) + ": unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    const std::string value = unquote(trim(line.substr(eq + 1)));
    if (key.empty()) throw std::invalid_argument("config line " + std::to_string(line_no) + ": empty key");
    if (!section.empty()) key = section + "." + key;
    out.emplace_back(key, value);
  }
  return out;
}

std::vector<Setting> read_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  for (const auto& item : parse_string_list(text)) out.push_back(to_double("list", item));
  return out;
}

std::vector<std::string> parse_string_list(const std::string& text) {
  std::string body = trim(text);
  if (!body.empty() && body.front() == '[' && body.back() == ']') body = body.substr(1, body.size() - 2);
  std::vector<std::string> out;
  std::stringstream ss(body);
  for (std::string item; std::getline(ss, item, ',');) {
    item = unquote(trim(item));
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

bool parse_bool(const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw std::invalid_argument("'" + text + "' is not a boolean");
}

void apply_fit_setting(FitConfig& fit, const std::string& key, const std::string& v) {
  if (key == "lr") fit.learning_rate = to_double(key, v);
  else if (key == "epochs") fit.epochs = static_cast<int>(to_long(key, v));
  else if (key == "envs_per_step") fit.envs_per_step = static_cast<int>(to_long(key, v));
  else if (key == "block") fit.block_size = to_long(key, v);
  else if (key == "rule") fit.rule = MarginalRule::parse(v);
  else if (key == "hidden") fit.hidden = Architecture::parse_hidden(v);
  else if (key == "freeze_noise") fit.freeze_noise = parse_bool(v);
  else if (key == "init_sigma") fit.init_sigma = to_double(key, v);
  else if (key == "init_noise") fit.init_noise = to_double(key, v);
  else if (key == "family") fit.family = ResponseFamily::parse(v);
  else throw std::invalid_argument("unknown fit setting '" + key + "'");
}

namespace {

bool apply_section(FitConfig& ngmm, FitConfig& baseline, const std::string& key, const std::string& v) {
  if (key.rfind("ngmm.", 0) == 0) {
    apply_fit_setting(ngmm, key.substr(5), v);
    return true;
  }
  if (key.rfind("baseline.", 0) == 0) {
    apply_fit_setting(baseline, key.substr(9), v);
    return true;
  }
  if (key.rfind("fit.", 0) == 0) {
    apply_fit_setting(ngmm, key.substr(4), v);
    apply_fit_setting(baseline, key.substr(4), v);
    return true;
  }
  return false;
}

}  // namespace

void apply_tradeoff_setting(TradeoffOptions& o, const std::string& key, const std::string& v) {
  if (apply_section(o.ngmm_fit, o.baseline_fit, key, v)) return;
  if (key == "sigma_e") o.scales.sigma_e = to_double(key, v);
  else if (key == "sigma_c") o.scales.sigma_c = to_double(key, v);
  else if (key == "sigma_u") o.scales.sigma_u = to_double(key, v);
  else if (key == "sigma_eps") o.scales.sigma_eps = to_double(key, v);
  else if (key == "alphas") o.alphas = parse_double_list(v);
  else if (key == "regimes") {
    o.regimes.clear();
    for (const auto& r : parse_string_list(v)) o.regimes.push_back(parse_regime(r));
  } else if (key == "train_envs") o.n_train_envs = static_cast<int>(to_long(key, v));
  else if (key == "test_envs") o.n_test_envs = static_cast<int>(to_long(key, v));
  else if (key == "n_per_env") o.n_per_env = static_cast<int>(to_long(key, v));
  else if (key == "reps") o.reps = static_cast<int>(to_long(key, v));
  else if (key == "methods") o.methods = parse_string_list(v);
  else if (key == "lambda_irm") o.lambda_irm = to_double(key, v);
  else if (key == "lambda_varex") o.lambda_varex = to_double(key, v);
  else if (key == "seed") o.seed = to_u64(key, v);
  else if (key == "full_scale") {
    if (parse_bool(v)) {
      o.n_train_envs = 50;
      o.n_test_envs = 50;
      o.n_per_env = 1000;
      o.reps = 10;
    }
  } else throw std::invalid_argument("unknown tradeoff setting '" + key + "'");
}

void apply_colored_setting(ColoredOptions& o, const std::string& key, const std::string& v) {
  if (apply_section(o.ngmm_fit, o.baseline_fit, key, v)) return;
  if (key == "a") o.base.a = to_double(key, v);
  else if (key == "b") o.base.b = to_double(key, v);
  else if (key == "n_per_env") o.base.n_per_env = static_cast<int>(to_long(key, v));
  else if (key == "n_test_per_env") o.n_test_per_env = static_cast<int>(to_long(key, v));
  else if (key == "mode") {
    if (v == "surrogate") o.base.mode = ColoredMode::TabularSurrogate;
    else if (v == "idx") o.base.mode = ColoredMode::IdxImages;
    else throw std::invalid_argument("colored mode must be surrogate or idx");
  } else if (key == "signal") o.base.signal = to_double(key, v);
  else if (key == "noise") o.base.noise = to_double(key, v);
  else if (key == "idx_images") o.base.idx_images = v;
  else if (key == "idx_labels") o.base.idx_labels = v;
  else if (key == "train_r") o.train_r = parse_double_list(v);
  else if (key == "test_r") o.test_r = parse_double_list(v);
  else if (key == "reps") o.reps = static_cast<int>(to_long(key, v));
  else if (key == "methods") o.methods = parse_string_list(v);
  else if (key == "lambda_irm") o.lambda_irm = to_double(key, v);
  else if (key == "lambda_varex") o.lambda_varex = to_double(key, v);
  else if (key == "seed") o.seed = to_u64(key, v);
  else throw std::invalid_argument("unknown colored setting '" + key + "'");
}

}  // namespace ngmm
