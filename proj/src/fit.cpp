#include "ngmm/fit.hpp"

#include <algorithm>
#include <numeric>

namespace ngmm {

void FitConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("fit: epochs must be at least 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw std::invalid_argument("fit: learning rate must be finite and non-negative");
  if (envs_per_step < 1) throw std::invalid_argument("fit: envs_per_step must be at least 1");
  if (block_size < 0) throw std::invalid_argument("fit: block size must be non-negative");
  if (!(init_sigma > 0.0) || !(init_noise > 0.0)) throw std::invalid_argument("fit: initial scales must be positive");
  if (rule.kind() == RuleKind::GaussianClosedForm && !family.is_gaussian())
    throw std::invalid_argument("fit: closed-form marginal requires the gaussian family");
}

std::vector<StepPlan> plan_epoch(const EnvDataset& data, Eigen::Index block_size, int envs_per_step, Philox& rng) {
  const std::size_t m = data.envs.size();
  std::vector<std::vector<std::vector<Eigen::Index>>> chunks(m);
  std::size_t rounds = 0;
  for (std::size_t e = 0; e < m; ++e) {
    const Eigen::Index n = data.envs[e].block.size();
    std::vector<Eigen::Index> rows(n);
    std::iota(rows.begin(), rows.end(), Eigen::Index{0});
    if (block_size == 0 || block_size >= n) {
      chunks[e].push_back(std::move(rows));
    } else {
      rng.shuffle(std::span<Eigen::Index>(rows));
      for (Eigen::Index start = 0; start < n; start += block_size) {
        const Eigen::Index stop = std::min(n, start + block_size);
        std::vector<Eigen::Index> chunk(rows.begin() + start, rows.begin() + stop);
        std::sort(chunk.begin(), chunk.end());
        chunks[e].push_back(std::move(chunk));
      }
    }
    rounds = std::max(rounds, chunks[e].size());
  }

  std::vector<StepPlan> steps;
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t k = 0; k < rounds; ++k) {
    rng.shuffle(std::span<std::size_t>(order));
    StepPlan current;
    for (std::size_t e : order) {
      if (k >= chunks[e].size()) continue;
      current.push_back({e, std::move(chunks[e][k])});
      if (static_cast<int>(current.size()) == envs_per_step) {
        steps.push_back(std::move(current));
        current.clear();
      }
    }
    if (!current.empty()) steps.push_back(std::move(current));
  }
  return steps;
}

StepBatch gather(const EnvDataset& data, const StepPlan& plan) {
  StepBatch batch;
  Eigen::Index total = 0;
  for (const auto& b : plan) total += static_cast<Eigen::Index>(b.rows.size());
  batch.features.resize(total, data.feature_dim());
  batch.responses.resize(total);
  batch.offsets.push_back(0);
  Eigen::Index row = 0;
  for (const auto& b : plan) {
    const auto& env = data.envs.at(b.env);
    for (Eigen::Index r : b.rows) {
      batch.features.row(row) = env.block.features.row(r);
      batch.responses(row) = env.block.responses(r);
      ++row;
    }
    batch.offsets.push_back(row);
    batch.env_ids.push_back(env.id);
  }
  return batch;
}

StepBatch gather_all(const EnvDataset& data) {
  StepBatch batch;
  batch.features = data.stacked_features();
  batch.responses = data.stacked_responses();
  batch.offsets = data.offsets();
  for (const auto& e : data.envs) batch.env_ids.push_back(e.id);
  return batch;
}

Var ngmm_objective(const BoundParams& p, const NgmmParams& model, const StepBatch& batch, const MarginalRule& rule) {
  Tape& tape = p.tape();
  const Var u = fixed_part(p, model.architecture(), tape.constant(batch.features));
  const Var ll = block_marginal_loglik(model.family(), u, batch.responses, intercept_scale(p),
                                       noise_scale(p, model.family()), rule, batch.offsets);
  return -ad::sum(ll) / static_cast<double>(batch.responses.size());
}

double ngmm_training_loss(const NgmmParams& params, const EnvDataset& data, const MarginalRule& rule) {
  const StepBatch all = gather_all(data);
  Tape tape;
  const BoundParams bound(tape, params.values());
  return ngmm_objective(bound, params, all, rule).scalar();
}

FitResult fit_ngmm(const EnvDataset& data, const FitConfig& config) {
  config.validate();
  data.validate();
  if (data.num_envs() < 2) throw std::invalid_argument("fit_ngmm: at least 2 training environments required");
  for (const auto& e : data.envs) check_block_family(config.family, e.block);

  Philox init_rng = Philox(config.seed).split(0x696e6974ULL);
  const Architecture arch{data.feature_dim(), config.hidden};
  NgmmParams init =
      NgmmParams::initialize(config.family, arch, init_rng, {config.init_sigma, config.init_noise, true});
  const MarginalRule& rule = config.rule;
  return detail::train(
      std::move(init), data, config,
      [&](const BoundParams& p, const NgmmParams& model, const StepBatch& batch) {
        return ngmm_objective(p, model, batch, rule);
      },
      [&](const NgmmParams& params) { return ngmm_training_loss(params, data, rule); });
}

}  // namespace ngmm
