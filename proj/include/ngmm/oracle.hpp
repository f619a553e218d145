#pragma once

#include "ngmm/datagen.hpp"
#include "ngmm/rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace ngmm {

// ---- closed-form Bayes risks for the tradeoff simulation ----

/// Posterior variance of e given (c, s): (1/sigma_e^2 + 1/sigma_c^2 + alpha^2/sigma_u^2)^-1.
double posterior_variance(const SimConfig& config);
/// Posterior mean of e given (c, s).
double posterior_mean(const SimConfig& config, double c, double s);

/// Marginal p(y | x) of the generator: Gaussian with these moments.
struct GaussianMoments {
  double mean = 0.0;
  double variance = 1.0;
};
GaussianMoments bayes_predictive(const SimConfig& config, double c, double s);

/// 1/2 log(1 + alpha^2 V / sigma_eps^2).
double bayes_risk_wellspec(const SimConfig& config);
/// 1/2 E_c[log(1 + (alpha + (1 - alpha) c)^2 V / sigma_eps^2)], c ~ N(0, sigma_e^2 + sigma_c^2), 128-node Gauss-Hermite.
double bayes_risk_misspec(const SimConfig& config);
/// Dispatches on config.regime.
double bayes_risk(const SimConfig& config);

struct MonteCarloEstimate {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Environment-average KL of the Bayes marginal predictor, estimated by
/// simulating (e, c, s) and computing the posterior of e numerically on a
/// Gauss-Hermite grid over the prior. Shares no algebra with the closed forms.
MonteCarloEstimate mc_bayes_risk(const SimConfig& config, std::size_t draws, std::uint64_t seed);

// ---- colored mechanism ----

/// sum_{d,c} p(d) p(c|d) max(p(y=1|d,c), 1 - p(y=1|d,c)).
double bayes_accuracy_colored(const ColoredConfig& config);

// ---- discrete joints ----

/// p(e, x, y) on finite supports.
class DiscreteJoint {
 public:
  DiscreteJoint(int n_e, int n_x, int n_y);
  DiscreteJoint(int n_e, int n_x, int n_y, std::vector<double> table);

  int n_e() const { return n_e_; }
  int n_x() const { return n_x_; }
  int n_y() const { return n_y_; }

  double& operator()(int e, int x, int y) { return p_[index(e, x, y)]; }
  double operator()(int e, int x, int y) const { return p_[index(e, x, y)]; }
  const std::vector<double>& table() const { return p_; }

  /// Non-negative, finite, sums to 1 within 1e-12.
  void validate() const;

  double p_ex(int e, int x) const;
  double p_x(int x) const;
  double p_xy(int x, int y) const;

  static DiscreteJoint random(Philox& rng, int n_e, int n_x, int n_y, double zero_fraction = 0.0);

 private:
  std::size_t index(int e, int x, int y) const {
    return (static_cast<std::size_t>(e) * n_x_ + x) * n_y_ + y;
  }
  int n_e_, n_x_, n_y_;
  std::vector<double> p_;
};

void write_joint_csv(const DiscreteJoint& joint, const std::string& path);
DiscreteJoint read_joint_csv(const std::string& path);

/// q(y | x) as an |X| x |Y| table, and a representation f: X -> Z as labels 0..|Z|-1.
using PredictorTable = Eigen::MatrixXd;
using Representation = std::vector<int>;

Representation identity_representation(int n_x);
void validate_predictor(const PredictorTable& q, const DiscreteJoint& joint);
PredictorTable random_predictor(Philox& rng, int n_x, int n_y);
/// Random q(y|z) pulled back through f.
PredictorTable random_predictor_through(Philox& rng, const Representation& f, int n_y);
/// The marginal conditional p(y | x).
PredictorTable marginal_conditional(const DiscreteJoint& joint);

struct RiskReport {
  double env_avg_risk = 0.0;
  double marginal_risk = 0.0;
  double irreducible = 0.0;
  double representation_term = 0.0;
  double predictor_term = 0.0;
  /// (e, x) cells with p(e, x) = 0 plus x cells with p(x) = 0, given zero weight.
  std::size_t skipped_cells = 0;
  /// q(y|x) is constant on every level set of f, so Prop.-2 style additivity applies.
  bool factors_through_f = true;

  double lemma1_deviation() const { return std::abs(env_avg_risk - (marginal_risk + irreducible)); }
  double decomposition_deviation() const {
    return std::abs(marginal_risk - (representation_term + predictor_term));
  }
};

RiskReport risk_report(const DiscreteJoint& joint, const PredictorTable& q, const Representation& f);
RiskReport risk_report(const DiscreteJoint& joint, const PredictorTable& q);

/// Conditional mutual informations, each as an expected KL between conditionals.
struct MiTerms {
  double y_x_given_f = 0.0;
  double y_e_given_f = 0.0;
  double y_x_given_ef = 0.0;
  double y_e_given_x = 0.0;
  double chain_deviation() const { return std::abs(y_x_given_f - (y_e_given_f + y_x_given_ef - y_e_given_x)); }
};

MiTerms mi_terms(const DiscreteJoint& joint, const Representation& f);

struct MiTradeoff {
  MiTerms ind;
  MiTerms ri;
  /// [I(y;x|e,f_ind) - I(y;x|e,f_RI)] - [I(y;e|f_RI) - I(y;e|f_ind)].
  double delta = 0.0;
  /// |delta - (I(y;x|f_ind) - I(y;x|f_RI))|.
  double delta_deviation = 0.0;
};

MiTradeoff mi_tradeoff(const DiscreteJoint& joint, const Representation& f_ind, const Representation& f_ri);

/// R(q) - R(p(y|x)) deviation from R-bar(q) - R-bar*, where R-bar* is the
/// environment-average risk of the marginal conditional p(y|x).
double excess_risk_deviation(const DiscreteJoint& joint, const PredictorTable& q);
bool check_excess_risk(const DiscreteJoint& joint, const PredictorTable& q, double tol = 1e-12);

/// All set partitions of {0..n-1} as restricted growth strings.
std::vector<Representation> enumerate_partitions(int n);
/// g = h(f) for some deterministic h.
bool is_function_of(const Representation& g, const Representation& f);

struct MinimalSearch {
  /// Representations reaching zero marginal risk, I(y; x | f) <= tol.
  std::vector<Representation> zero_risk;
  /// A zero-risk map recoverable from every other one; empty if none exists.
  Representation minimal;
  bool found = false;
};

/// Exhaustive search over deterministic maps X -> Z (|X| <= 6).
MinimalSearch minimal_representation(const DiscreteJoint& joint, double tol = 1e-12);

/// Joint of the form p(e) p(s|e) p(c|e) p(y|c) with x = (c, s) encoded as x = c * n_s + s.
DiscreteJoint invariant_model_joint(Philox& rng, int n_e, int n_c, int n_s, int n_y);

/// Split of a fitted predictor's marginal risk against the best member of a finite family:
/// R(theta_hat) = min_theta R(theta) + estimation error.
struct RiskSplit {
  double irreducible = 0.0;
  double best_in_family = 0.0;
  double estimation = 0.0;
};
RiskSplit empirical_risk_split(const DiscreteJoint& joint, const PredictorTable& fitted,
                               const std::vector<PredictorTable>& family);

}  // namespace ngmm
