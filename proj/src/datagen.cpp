#include "ngmm/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <optional>
#include <stdexcept>

namespace ngmm {

std::string regime_name(Regime r) { return r == Regime::WellSpecified ? "wellspec" : "misspec"; }

Regime parse_regime(const std::string& s) {
  if (s == "wellspec" || s == "well-specified") return Regime::WellSpecified;
  if (s == "misspec" || s == "misspecified") return Regime::Misspecified;
  throw std::invalid_argument("unknown regime '" + s + "'");
}

void SimConfig::validate() const {
  for (double v : {sigma_e, sigma_c, sigma_u, sigma_eps})
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("simulation scales must be positive and finite");
  if (!std::isfinite(alpha) || alpha < 0.0) throw std::invalid_argument("alpha must be a finite value >= 0");
  if (regime == Regime::Misspecified && alpha > 1.0) throw std::invalid_argument("misspecified regime needs alpha in [0, 1]");
  if (n_envs < 1 || n_per_env < 1) throw std::invalid_argument("n_envs and n_per_env must be positive");
}

TradeoffData gen_tradeoff(const SimConfig& config) {
  config.validate();
  TradeoffData out;
  out.data.feature_names = {"c", "s"};
  const Philox root(config.seed);
  for (int j = 0; j < config.n_envs; ++j) {
    const int id = config.first_env_id + j;
    Philox rng = root.split(static_cast<std::uint64_t>(id));
    const double e = config.sigma_e * rng.normal();
    Environment env{id, {Eigen::MatrixXd(config.n_per_env, 2), Eigen::VectorXd(config.n_per_env)}};
    for (int i = 0; i < config.n_per_env; ++i) {
      const double c = e + config.sigma_c * rng.normal();
      const double s = config.alpha * e + config.sigma_u * rng.normal();
      const double eps = config.sigma_eps * rng.normal();
      env.block.features(i, 0) = c;
      env.block.features(i, 1) = s;
      env.block.responses(i) = config.true_mean(c, e) + eps;
    }
    out.data.envs.push_back(std::move(env));
    out.latents.push_back(e);
  }
  return out;
}

double ColoredConfig::label_probability(int d, int c) const {
  if (d == 0) return c == 1 ? a + r : a - r;
  return c == 1 ? b + r : b - r;
}

void ColoredConfig::validate() const {
  for (int d = 0; d < 2; ++d)
    for (int c = 0; c < 2; ++c) {
      const double p = label_probability(d, c);
      if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("colored label probabilities must lie in [0, 1]");
    }
  if (n_per_env < 1) throw std::invalid_argument("n_per_env must be positive");
  if (mode == ColoredMode::TabularSurrogate && (!(noise >= 0.0) || !std::isfinite(signal)))
    throw std::invalid_argument("surrogate signal must be finite and noise >= 0");
  if (mode == ColoredMode::IdxImages && (idx_images.empty() || idx_labels.empty()))
    throw std::invalid_argument("image mode needs idx image and label paths");
}

namespace {

struct ImageSource {
  IdxImages images;
  std::vector<std::uint8_t> labels;
  std::vector<std::size_t> by_parity[2];
};

ImageSource load_source(const ColoredConfig& config) {
  ImageSource src{load_idx_images(config.idx_images), load_idx_labels(config.idx_labels), {}};
  if (src.labels.size() != static_cast<std::size_t>(src.images.pixels.rows()))
    throw std::runtime_error("image and label files hold different counts");
  for (std::size_t i = 0; i < src.labels.size(); ++i) src.by_parity[src.labels[i] % 2].push_back(i);
  if (src.by_parity[0].empty() || src.by_parity[1].empty())
    throw std::runtime_error("image source needs both even and odd digits");
  return src;
}

Environment draw_colored(const ColoredConfig& config, const ImageSource* src) {
  Philox rng = Philox(config.seed).split(0x636f6c00ULL + static_cast<std::uint64_t>(config.env_id));
  const Eigen::Index n = config.n_per_env;
  const Eigen::Index pixels = src ? src->images.pixels.cols() : 0;
  Environment env{config.env_id, {Eigen::MatrixXd(n, src ? 3 * pixels : 2), Eigen::VectorXd(n)}};
  for (Eigen::Index i = 0; i < n; ++i) {
    const int d = rng.bernoulli(0.5) ? 1 : 0;
    const int c = rng.bernoulli(ColoredConfig::color_probability(d)) ? 1 : 0;
    const int y = rng.bernoulli(config.label_probability(d, c)) ? 1 : 0;
    if (src) {
      const auto& pool = src->by_parity[d];
      const auto img = src->images.pixels.row(static_cast<Eigen::Index>(pool[rng.below(pool.size())]));
      // channel 0 red, 1 green, 2 blue (left empty)
      env.block.features.row(i).setZero();
      env.block.features.row(i).segment(c == 1 ? 0 : pixels, pixels) = img;
    } else {
      env.block.features(i, 0) = config.signal * (2.0 * d - 1.0) + config.noise * rng.normal();
      env.block.features(i, 1) = c;
    }
    env.block.responses(i) = y;
  }
  return env;
}

}  // namespace

EnvDataset gen_colored(const ColoredConfig& config) { return gen_colored(config, {config.r}); }

EnvDataset gen_colored(const ColoredConfig& base, const std::vector<double>& r_values) {
  EnvDataset out;
  std::optional<ImageSource> src;
  if (base.mode == ColoredMode::IdxImages) {
    src = load_source(base);
    const std::size_t p = src->images.rows * src->images.cols;
    for (const char* ch : {"r", "g", "b"})
      for (std::size_t k = 0; k < p; ++k) out.feature_names.push_back(std::string(ch) + std::to_string(k));
  } else {
    out.feature_names = {"parity_proxy", "color"};
  }
  for (std::size_t k = 0; k < r_values.size(); ++k) {
    ColoredConfig cfg = base;
    cfg.r = r_values[k];
    cfg.env_id = base.env_id + static_cast<int>(k);
    cfg.validate();
    out.envs.push_back(draw_colored(cfg, src ? &*src : nullptr));
  }
  return out;
}

// ---- IDX ----

namespace {

std::vector<unsigned char> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off, const std::string& path) {
  if (off + 4 > b.size())
    throw IdxFormatError("'" + path + "': header truncated at byte offset " + std::to_string(b.size()), b.size());
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
         std::uint32_t{b[off + 3]};
}

void check_magic(const std::vector<unsigned char>& b, std::uint32_t expected, const std::string& path) {
  const std::uint32_t magic = be32(b, 0, path);
  if (magic != expected) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "bad magic 0x%08x at byte offset 0 (expected 0x%08x)", magic, expected);
    throw IdxFormatError("'" + path + "': " + buf, 0);
  }
}

void check_payload(const std::vector<unsigned char>& b, std::size_t header, std::size_t expected,
                   const std::string& path) {
  const std::size_t actual = b.size() - header;
  if (actual != expected)
    throw IdxFormatError("'" + path + "': payload at byte offset " + std::to_string(header) + " holds " +
                             std::to_string(actual) + " bytes, expected " + std::to_string(expected),
                         header + std::min(actual, expected));
}

void put_be32(std::ofstream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                     static_cast<char>(v)};
  out.write(b, 4);
}

}  // namespace

IdxImages load_idx_images(const std::string& path) {
  const auto b = read_all(path);
  check_magic(b, 0x00000803u, path);
  const std::size_t n = be32(b, 4, path), rows = be32(b, 8, path), cols = be32(b, 12, path);
  check_payload(b, 16, n * rows * cols, path);
  IdxImages out{rows, cols, Eigen::MatrixXd(n, rows * cols)};
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < rows * cols; ++k) out.pixels(i, k) = b[16 + i * rows * cols + k] / 255.0;
  return out;
}

std::vector<std::uint8_t> load_idx_labels(const std::string& path) {
  const auto b = read_all(path);
  check_magic(b, 0x00000801u, path);
  const std::size_t n = be32(b, 4, path);
  check_payload(b, 8, n, path);
  return {b.begin() + 8, b.end()};
}

void write_idx_images(const IdxImages& images, const std::string& path) {
  if (static_cast<std::size_t>(images.pixels.cols()) != images.rows * images.cols)
    throw std::invalid_argument("image pixel width does not match rows x cols");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  put_be32(out, 0x00000803u);
  put_be32(out, static_cast<std::uint32_t>(images.pixels.rows()));
  put_be32(out, static_cast<std::uint32_t>(images.rows));
  put_be32(out, static_cast<std::uint32_t>(images.cols));
  for (Eigen::Index i = 0; i < images.pixels.rows(); ++i)
    for (Eigen::Index k = 0; k < images.pixels.cols(); ++k) {
      const double v = std::clamp(images.pixels(i, k), 0.0, 1.0);
      out.put(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
    }
}

void write_idx_labels(const std::vector<std::uint8_t>& labels, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  put_be32(out, 0x00000801u);
  put_be32(out, static_cast<std::uint32_t>(labels.size()));
  out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size()));
}

}  // namespace ngmm
