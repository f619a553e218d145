#include "ngmm/baselines.hpp"

#include <stdexcept>

namespace ngmm {

void PenaltyConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("penalty lambda must be finite and >= 0");
}

std::string method_name(PenaltyMethod m) {
  switch (m) {
    case PenaltyMethod::ERM: return "erm";
    case PenaltyMethod::IRM: return "irm";
    case PenaltyMethod::VaREx: return "varex";
  }
  return "?";
}

PenaltyMethod parse_method(const std::string& s) {
  if (s == "erm") return PenaltyMethod::ERM;
  if (s == "irm") return PenaltyMethod::IRM;
  if (s == "varex") return PenaltyMethod::VaREx;
  throw std::invalid_argument("unknown baseline method '" + s + "'");
}

Var predictor_nll(const BoundParams& p, const NgmmParams& model, const Var& fixed_part, const Eigen::VectorXd& y) {
  return -log_density(model.family(), fixed_part, Eigen::MatrixXd(y), noise_scale(p, model.family()));
}

namespace {

Var mean_per_block(const Var& rows, const std::vector<Eigen::Index>& offsets) {
  Eigen::MatrixXd inv(offsets.size() - 1, 1);
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) inv(s, 0) = 1.0 / static_cast<double>(offsets[s + 1] - offsets[s]);
  return ad::segment_sum(rows, offsets) * rows.tape().constant(inv);
}

}  // namespace

double erm_loss(const NgmmParams& model, const EnvDataset& data) {
  data.validate();
  const StepBatch all = gather_all(data);
  Tape tape;
  const BoundParams p(tape, model.values());
  const Var u = fixed_part(p, model.architecture(), tape.constant(all.features));
  return ad::mean(predictor_nll(p, model, u, all.responses)).scalar();
}

Var irm_dummy_gradients(const NgmmParams& model, const Var& fixed_part, const Eigen::VectorXd& y, const Var& noise,
                        const std::vector<Eigen::Index>& offsets) {
  Tape& tape = fixed_part.tape();
  const Var yv = tape.constant(Eigen::MatrixXd(y));
  // d/dw of the per-row NLL at w = 1, times u.
  Var per_row = model.family().is_bernoulli() ? (ad::logistic(fixed_part) - yv) * fixed_part
                                              : -((yv - fixed_part) * fixed_part) / ad::square(noise);
  return mean_per_block(per_row, offsets);
}

double irm_penalty(const NgmmParams& model, const EnvBlock& block) {
  block.validate();
  Tape tape;
  const BoundParams p(tape, model.values());
  const Var u = fixed_part(p, model.architecture(), tape.constant(block.features));
  const Var g = irm_dummy_gradients(model, u, block.responses, noise_scale(p, model.family()),
                                    {0, block.size()});
  return ad::square(g).scalar();
}

double varex_penalty(const Eigen::VectorXd& risks) {
  if (risks.size() < 1) throw std::invalid_argument("varex_penalty: at least one environment required");
  return (risks.array() - risks.mean()).square().mean();
}

Var varex_penalty(const Var& risks) {
  const Var centered = risks - ad::mean(risks);
  return ad::mean(ad::square(centered));
}

Var baseline_objective(const BoundParams& p, const NgmmParams& model, const StepBatch& batch,
                       const PenaltyConfig& penalty) {
  Tape& tape = p.tape();
  const Var u = fixed_part(p, model.architecture(), tape.constant(batch.features));
  const Var risks = mean_per_block(predictor_nll(p, model, u, batch.responses), batch.offsets);
  Var loss = ad::mean(risks);
  const double lambda = penalty.effective_lambda();
  if (lambda == 0.0) return loss;
  if (penalty.method == PenaltyMethod::IRM) {
    const Var g = irm_dummy_gradients(model, u, batch.responses, noise_scale(p, model.family()), batch.offsets);
    return loss + lambda * ad::mean(ad::square(g));
  }
  return loss + lambda * varex_penalty(risks);
}

FitResult fit_baseline(const EnvDataset& data, const FitConfig& config, const PenaltyConfig& penalty) {
  config.validate();
  penalty.validate();
  data.validate();
  if (data.num_envs() < 2) throw std::invalid_argument("fit_baseline: at least 2 training environments required");
  for (const auto& e : data.envs) check_block_family(config.family, e.block);

  // Same init stream as fit_ngmm so the shared layers start identically.
  Philox init_rng = Philox(config.seed).split(0x696e6974ULL);
  const Architecture arch{data.feature_dim(), config.hidden};
  NgmmParams init = NgmmParams::initialize(config.family, arch, init_rng, {config.init_sigma, config.init_noise, false});
  const StepBatch all = gather_all(data);
  return detail::train(
      std::move(init), data, config,
      [&](const BoundParams& p, const NgmmParams& model, const StepBatch& batch) {
        return baseline_objective(p, model, batch, penalty);
      },
      [&](const NgmmParams& params) {
        Tape tape;
        const BoundParams p(tape, params.values());
        return baseline_objective(p, params, all, penalty).scalar();
      });
}

}  // namespace ngmm
