#pragma once

#include "ngmm/dataset.hpp"
#include "ngmm/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace ngmm {

enum class Regime { WellSpecified, Misspecified };

std::string regime_name(Regime r);
Regime parse_regime(const std::string& s);

/// Simulation with features x = (c, s):
///   e_j ~ N(0, sigma_e^2), c | e ~ N(e, sigma_c^2), s = alpha e + u, u ~ N(0, sigma_u^2),
///   well specified  y = c + alpha e + eps,
///   misspecified    y = c + alpha e + (1 - alpha) e c + eps,   eps ~ N(0, sigma_eps^2).
struct SimConfig {
  double sigma_e = 1.0;
  double sigma_c = 1.0;
  double sigma_u = 1.0;
  double sigma_eps = 1.0;
  double alpha = 0.0;
  Regime regime = Regime::WellSpecified;
  int n_envs = 20;
  int n_per_env = 500;
  std::uint64_t seed = 0;
  /// Id of the first generated environment; later ones count up from it.
  int first_env_id = 0;

  void validate() const;
  /// Coefficient multiplying e in E[y | c, e].
  double env_coefficient(double c) const { return regime == Regime::WellSpecified ? alpha : alpha + (1.0 - alpha) * c; }
  /// E[y | c, e].
  double true_mean(double c, double e) const { return c + env_coefficient(c) * e; }
};

struct TradeoffData {
  EnvDataset data;
  /// e_j per environment, aligned with data.envs.
  std::vector<double> latents;
};

TradeoffData gen_tradeoff(const SimConfig& config);

enum class ColoredMode { TabularSurrogate, IdxImages };

/// Parity d ~ Bernoulli(1/2), p(c=1|d=0) = 5/8, p(c=1|d=1) = 3/8, and
/// p(y=1 | d, c) = (a+r, a-r, b+r, b-r) for (d,c) = (0,1), (0,0), (1,1), (1,0).
struct ColoredConfig {
  double a = 0.75;
  double b = 0.25;
  double r = 0.0;
  int n_per_env = 5000;
  ColoredMode mode = ColoredMode::TabularSurrogate;
  /// Surrogate parity proxy z (2d - 1) + noise * N(0, 1).
  double signal = 2.0;
  double noise = 1.0;
  std::string idx_images;
  std::string idx_labels;
  std::uint64_t seed = 0;
  int env_id = 0;

  /// p(y = 1 | d, c).
  double label_probability(int d, int c) const;
  static double color_probability(int d) { return d == 0 ? 5.0 / 8.0 : 3.0 / 8.0; }
  void validate() const;
};

/// One environment drawn from `config`.
EnvDataset gen_colored(const ColoredConfig& config);
/// One environment per r value, ids counting up from base.env_id and seeds split per environment.
EnvDataset gen_colored(const ColoredConfig& base, const std::vector<double>& r_values);

struct IdxImages {
  std::size_t rows = 0;
  std::size_t cols = 0;
  /// One image per row, pixel bytes rescaled to [0, 1].
  Eigen::MatrixXd pixels;
};

class IdxFormatError : public std::runtime_error {
 public:
  IdxFormatError(const std::string& what, std::size_t offset) : std::runtime_error(what), offset_(offset) {}
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

IdxImages load_idx_images(const std::string& path);
std::vector<std::uint8_t> load_idx_labels(const std::string& path);
/// Pixels are rounded back to bytes.
void write_idx_images(const IdxImages& images, const std::string& path);
void write_idx_labels(const std::vector<std::uint8_t>& labels, const std::string& path);

}  // namespace ngmm
