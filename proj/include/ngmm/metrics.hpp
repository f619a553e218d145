#pragma once

#include "ngmm/datagen.hpp"
#include "ngmm/model.hpp"
#include "ngmm/oracle.hpp"

#include <functional>
#include <string>
#include <vector>

namespace ngmm {

struct BinaryMetrics {
  std::size_t n = 0;
  double accuracy = 0.0;
  double nll = 0.0;
  double brier = 0.0;
  double ece = 0.0;
  double accuracy_se = 0.0;
  double nll_se = 0.0;
  double brier_se = 0.0;
  /// Some p(y) fell outside [1e-12, 1 - 1e-12] and was clamped for the NLL.
  bool nll_clamped = false;
};

inline constexpr int kEceBins = 10;
inline constexpr double kProbClamp = 1e-12;

/// Threshold 0.5 with ties to class 1; ECE over 10 equal-width bins on p1.
BinaryMetrics eval_binary(const Eigen::VectorXd& p1, const Eigen::VectorXd& labels);

/// KL(N(mu, s2) || N(m, v)).
double gaussian_kl(double mu, double s2, double m, double v);

struct PredictiveBatch {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
};

/// Gaussian predictive for a block of rows. `latent` is the environment's e;
/// x-only predictors ignore it.
using GaussianPredictor = std::function<PredictiveBatch(const Eigen::MatrixXd& x, double latent)>;

GaussianPredictor model_predictor(const NgmmParams& params, const MarginalRule& rule);
/// The generator's marginal p(y | x).
GaussianPredictor bayes_predictor(const SimConfig& config);
/// p(y | x, e) with e known; diagnostic only.
GaussianPredictor conditional_oracle_predictor(const SimConfig& config);

/// Mean KL(p(y|x,e) || predictor) over held-out environments; the standard
/// error is taken over per-environment means.
MonteCarloEstimate estimate_env_avg_risk(const GaussianPredictor& predictor, const TradeoffData& test,
                                         const SimConfig& generator);
/// Fresh environments from `generator` holding n_mc points in total.
MonteCarloEstimate estimate_env_avg_risk(const GaussianPredictor& predictor, const SimConfig& generator,
                                         std::size_t n_mc, std::uint64_t seed);

struct EvalRow {
  std::string method;
  std::string env_id;
  std::string metric;
  double value = 0.0;
  double std_error = 0.0;
  std::uint64_t seed = 0;
};

void write_eval_csv(const std::vector<EvalRow>& rows, const std::string& path);
void append_binary_rows(std::vector<EvalRow>& rows, const std::string& method, const std::string& env_id,
                        const BinaryMetrics& m, std::uint64_t seed);

}  // namespace ngmm
