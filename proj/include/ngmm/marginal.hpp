#pragma once

#include "ngmm/expfam.hpp"
#include "ngmm/quadrature.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace ngmm {

enum class RuleKind { GaussHermite, TruncatedGrid, GaussianClosedForm };

/// A 1-D integration scheme over gamma ~ N(0, sigma^2), stored on the
/// standardized scale z = gamma / sigma: integral g(gamma) phi_sigma(gamma)
/// d gamma ~= sum_k exp(log_weight_k) g(sigma z_k).
class MarginalRule {
 public:
  /// Gauss-Hermite of the given order, rescaled to the standard normal.
  static MarginalRule gauss_hermite(int order);

  /// Trapezoid rule on [-half_width, half_width] (standardized units) with
  /// `steps` intervals, i.e. steps + 1 nodes.
  static MarginalRule truncated_grid(double half_width, int steps);

  /// Exact compound-symmetry Gaussian likelihood; Gaussian family only.
  static MarginalRule gaussian_closed_form();

  /// Parse "gh:32", "grid:10:512" or "closed".
  static MarginalRule parse(const std::string& spec);

  RuleKind kind() const { return kind_; }
  int order() const { return order_; }
  double half_width() const { return half_width_; }
  const Eigen::RowVectorXd& nodes() const { return nodes_; }
  const Eigen::RowVectorXd& log_weights() const { return log_weights_; }
  Eigen::RowVectorXd weights() const { return log_weights_.array().exp(); }
  std::string describe() const;

 private:
  RuleKind kind_ = RuleKind::GaussHermite;
  int order_ = 0;
  double half_width_ = 0.0;
  Eigen::RowVectorXd nodes_;
  Eigen::RowVectorXd log_weights_;
};

/// Covariates and responses observed in one environment.
struct EnvBlock {
  Eigen::MatrixXd features;
  Eigen::VectorXd responses;

  Eigen::Index size() const { return responses.size(); }
  void validate() const;
};

/// Marginal log-likelihood of consecutive row blocks on the tape.
///
/// `fixed_part` is n x 1 (beta' f(x) per row), `offsets` delimits the blocks
/// (offsets.front() == 0, offsets.back() == n), `sigma` and `noise` are 1x1.
/// Returns an m x 1 vector with one integrated log-likelihood per block,
/// accumulated in log space with per-block max-centering.
Var block_marginal_loglik(const ResponseFamily& family, const Var& fixed_part, const Eigen::VectorXd& y,
                          const Var& sigma, const Var& noise, const MarginalRule& rule,
                          const std::vector<Eigen::Index>& offsets);

/// Single-environment marginal log-likelihood for given fixed parts.
double env_marginal_loglik(const ResponseFamily& family, const Eigen::VectorXd& fixed_part,
                           const Eigen::VectorXd& y, double sigma, double noise, const MarginalRule& rule);

/// Predictive distribution of y in an unseen environment.
struct Predictive {
  ResponseFamily family;
  double mean = 0.0;      // p(y = 1) for Bernoulli
  double variance = 0.0;  // p1 (1 - p1) for Bernoulli

  double p1() const { return mean; }
};

/// integral q(y | u + gamma) phi_sigma(gamma) d gamma for a single fixed part u.
Predictive marginal_predictive(const ResponseFamily& family, double fixed_part, double sigma, double noise,
                               const MarginalRule& rule);

}  // namespace ngmm
