#pragma once

#include "ngmm/fit.hpp"

#include <string>

namespace ngmm {

enum class PenaltyMethod { ERM, IRM, VaREx };

struct PenaltyConfig {
  PenaltyMethod method = PenaltyMethod::ERM;
  double lambda = 0.0;

  static PenaltyConfig erm() { return {PenaltyMethod::ERM, 0.0}; }
  static PenaltyConfig irm(double lambda) { return {PenaltyMethod::IRM, lambda}; }
  static PenaltyConfig varex(double lambda) { return {PenaltyMethod::VaREx, lambda}; }

  /// ERM ignores lambda.
  double effective_lambda() const { return method == PenaltyMethod::ERM ? 0.0 : lambda; }
  void validate() const;
};

std::string method_name(PenaltyMethod m);
PenaltyMethod parse_method(const std::string& s);

/// Per-row negative log likelihood of an x -> y predictor (no random intercept), n x 1.
Var predictor_nll(const BoundParams& p, const NgmmParams& model, const Var& fixed_part, const Eigen::VectorXd& y);

/// Pooled mean negative log likelihood over every observation.
double erm_loss(const NgmmParams& model, const EnvDataset& data);

/// IRMv1: squared derivative of the environment risk R_e(w * u) at w = 1.
double irm_penalty(const NgmmParams& model, const EnvBlock& block);
/// Per-block dummy-scale derivative, m x 1.
Var irm_dummy_gradients(const NgmmParams& model, const Var& fixed_part, const Eigen::VectorXd& y,
                        const Var& noise, const std::vector<Eigen::Index>& offsets);

/// Population variance of the per-environment risks.
double varex_penalty(const Eigen::VectorXd& per_env_risks);
Var varex_penalty(const Var& per_env_risks);

/// mean_b R_b + lambda * penalty over the blocks of `batch`.
Var baseline_objective(const BoundParams& p, const NgmmParams& model, const StepBatch& batch,
                       const PenaltyConfig& penalty);

/// Same driver, optimizer and block plan as fit_ngmm, on a predictor without a random intercept.
FitResult fit_baseline(const EnvDataset& data, const FitConfig& config, const PenaltyConfig& penalty);

}  // namespace ngmm
