#pragma once

#include "ngmm/dataset.hpp"
#include "ngmm/model.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ngmm {

struct FitConfig {
  ResponseFamily family = ResponseFamily::gaussian();
  double learning_rate = 1e-2;
  int epochs = 20;
  /// Distinct environments contributing one block each per optimizer step.
  int envs_per_step = 1;
  /// Rows per environment block; 0 keeps every environment whole.
  Eigen::Index block_size = 0;
  MarginalRule rule = MarginalRule::gauss_hermite(32);
  std::uint64_t seed = 0;
  std::vector<Eigen::Index> hidden{32, 32};
  bool freeze_noise = false;
  double init_sigma = 1.0;
  double init_noise = 1.0;
  AdamOptions adam{};

  void validate() const;
};

/// Selected rows of environment `env` (an index into EnvDataset::envs).
struct BlockRef {
  std::size_t env = 0;
  std::vector<Eigen::Index> rows;
};

using StepPlan = std::vector<BlockRef>;

/// Per-epoch step plan. Rows of each environment are shuffled and chunked into
/// blocks; chunk k of every environment is visited in round k, environments in
/// shuffled order, and consecutive groups of `envs_per_step` within a round
/// form one step, so a step never holds two blocks of the same environment.
std::vector<StepPlan> plan_epoch(const EnvDataset& data, Eigen::Index block_size, int envs_per_step, Philox& rng);

/// Stacked rows of a step plus per-block offsets (0, n_1, n_1 + n_2, ...).
struct StepBatch {
  Eigen::MatrixXd features;
  Eigen::VectorXd responses;
  std::vector<Eigen::Index> offsets;
  std::vector<int> env_ids;
};

StepBatch gather(const EnvDataset& data, const StepPlan& plan);
/// Every environment whole, in dataset order.
StepBatch gather_all(const EnvDataset& data);

/// Training hit a non-finite value.
class FitError : public std::runtime_error {
 public:
  FitError(const std::string& what, int epoch, std::vector<int> env_ids)
      : std::runtime_error(what), epoch_(epoch), env_ids_(std::move(env_ids)) {}
  int epoch() const { return epoch_; }
  const std::vector<int>& env_ids() const { return env_ids_; }

 private:
  int epoch_;
  std::vector<int> env_ids_;
};

struct FitResult {
  NgmmParams params;
  /// Full-data training objective (lower is better) before training and after each epoch.
  std::vector<double> loss_trace;
  std::size_t steps = 0;
};

/// -sum_b log q(y_b | x_b) / N over the blocks of `batch`.
Var ngmm_objective(const BoundParams& p, const NgmmParams& model, const StepBatch& batch, const MarginalRule& rule);

/// Negative mean marginal log likelihood per observation on whole environments.
double ngmm_training_loss(const NgmmParams& params, const EnvDataset& data, const MarginalRule& rule);

/// Stochastic ascent on sum_e log q(y_e | x_e).
FitResult fit_ngmm(const EnvDataset& data, const FitConfig& config);

namespace detail {

/// Shared epoch/step driver. `objective(p, model, batch)` returns the 1x1 step loss and
/// `trace(params)` the full-data value recorded per epoch.
template <typename Objective, typename Trace>
FitResult train(NgmmParams params, const EnvDataset& data, const FitConfig& config, Objective&& objective,
                Trace&& trace) {
  FitResult result;
  Philox rng = Philox(config.seed).split(0x7472616eULL);
  AdamState state = AdamState::for_params(params.values());
  const bool freeze = config.freeze_noise && params.values().contains("noise.raw");
  std::vector<int> all_ids;
  for (const auto& e : data.envs) all_ids.push_back(e.id);
  auto full_loss = [&](int epoch) {
    double value;
    try {
      value = trace(params);
    } catch (const ad::NonFiniteError& e) {
      throw FitError(std::string("non-finite full-data loss: ") + e.what(), epoch, all_ids);
    }
    if (!std::isfinite(value)) throw FitError("non-finite full-data loss", epoch, all_ids);
    return value;
  };
  result.loss_trace.push_back(full_loss(0));

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (const auto& plan : plan_epoch(data, config.block_size, config.envs_per_step, rng)) {
      const StepBatch batch = gather(data, plan);
      Evaluation eval;
      try {
        eval = forward_backward([&](Tape&, const BoundParams& p) { return objective(p, params, batch); },
                                params.values());
      } catch (const ad::NonFiniteError& e) {
        throw FitError(std::string("non-finite value during training: ") + e.what(), epoch, batch.env_ids);
      }
      if (!std::isfinite(eval.value) || !eval.grad.flat().allFinite())
        throw FitError("non-finite training loss", epoch, batch.env_ids);
      if (freeze) eval.grad.segment("noise.raw").setZero();
      params.set_values(adam_step(params.values(), eval.grad, state, config.learning_rate, config.adam));
      ++result.steps;
    }
    result.loss_trace.push_back(full_loss(epoch));
  }
  result.params = std::move(params);
  return result;
}

}  // namespace detail

}  // namespace ngmm
