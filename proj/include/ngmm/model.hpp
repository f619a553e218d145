#pragma once

#include "ngmm/autodiff.hpp"
#include "ngmm/expfam.hpp"
#include "ngmm/marginal.hpp"
#include "ngmm/rng.hpp"

#include <string>
#include <vector>

namespace ngmm {

/// Fixed-effect network f_phi: relu MLP with the given hidden widths. With no
/// hidden layers f is the identity on the inputs.
struct Architecture {
  Eigen::Index input_dim = 0;
  std::vector<Eigen::Index> hidden{32, 32};

  Eigen::Index representation_dim() const { return hidden.empty() ? input_dim : hidden.back(); }
  std::string describe() const;
  static std::vector<Eigen::Index> parse_hidden(const std::string& spec);

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

struct InitOptions {
  double sigma = 1.0;
  double noise = 1.0;
  bool random_intercept = true;
};

/// Network weights phi, head beta (plus a scalar head bias) and, for the
/// random-intercept model, the intercept scale sigma = softplus(sigma.raw).
/// Gaussian families additionally carry noise.raw with sigma_eps = softplus(noise.raw).
///
/// Without `sigma.raw` the same container is a plain x -> y predictor, which is
/// how the ERM / IRM / VaREx baselines share the architecture.
class NgmmParams {
 public:
  NgmmParams() = default;

  /// Glorot-uniform linear layers, zero biases.
  static NgmmParams initialize(const ResponseFamily& family, const Architecture& arch, Philox& rng,
                               const InitOptions& options = {});

  const ResponseFamily& family() const { return family_; }
  const Architecture& architecture() const { return arch_; }
  const ParamVector& values() const { return values_; }
  ParamVector& values() { return values_; }
  void set_values(ParamVector v);

  bool has_random_intercept() const { return values_.contains("sigma.raw"); }
  double sigma() const;
  /// sigma_eps for Gaussian families, 1 for Bernoulli.
  double noise() const;

  Eigen::MatrixXd representation(const Eigen::MatrixXd& x) const;
  /// beta' f_phi(x) + bias per row.
  Eigen::VectorXd fixed_part(const Eigen::MatrixXd& x) const;

  static std::string layer_weight(std::size_t i) { return "layer" + std::to_string(i) + ".weight"; }
  static std::string layer_bias(std::size_t i) { return "layer" + std::to_string(i) + ".bias"; }

 private:
  ResponseFamily family_;
  Architecture arch_;
  ParamVector values_;
};

// ---- tape-level model pieces ----

Var representation(const BoundParams& p, const Architecture& arch, const Var& x);
Var fixed_part(const BoundParams& p, const Architecture& arch, const Var& x);
/// 1x1 sigma = softplus(sigma.raw).
Var intercept_scale(const BoundParams& p);
/// 1x1 sigma_eps for Gaussian, constant 1 for Bernoulli.
Var noise_scale(const BoundParams& p, const ResponseFamily& family);

/// log q_{beta,phi}(y | x, gamma) for one observation.
double log_density(const NgmmParams& params, double y, const Eigen::RowVectorXd& x, double gamma);

/// E[y | x, gamma].
double conditional_mean(const NgmmParams& params, const Eigen::RowVectorXd& x, double gamma);

/// log q(y_e | x_e) with the latent intercept integrated out by `rule`.
double env_marginal_loglik(const NgmmParams& params, const EnvBlock& block, const MarginalRule& rule);

/// Gauss-Hermite(64); used when a Bernoulli predictive is asked for with the closed-form rule.
const MarginalRule& default_rule();

/// Every response is admissible for the family.
void check_block_family(const ResponseFamily& family, const EnvBlock& block);

/// Predictive distribution for an unseen environment. With a random intercept
/// this integrates gamma ~ N(0, sigma^2) by `rule`; a plain predictor returns
/// logistic(u) or N(u, sigma_eps^2).
Predictive predict(const NgmmParams& params, const Eigen::RowVectorXd& x, const MarginalRule& rule);
std::vector<Predictive> predict(const NgmmParams& params, const Eigen::MatrixXd& x, const MarginalRule& rule);

/// 1 iff the fixed part is >= 0. Bernoulli only.
int classify_fast(const NgmmParams& params, const Eigen::RowVectorXd& x);
int classify_fast(const ResponseFamily& family, double fixed_part);

}  // namespace ngmm
