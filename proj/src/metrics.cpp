#include "ngmm/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <stdexcept>

namespace ngmm {

BinaryMetrics eval_binary(const Eigen::VectorXd& p1, const Eigen::VectorXd& labels) {
  if (p1.size() != labels.size()) throw std::invalid_argument("eval_binary: predictions and labels differ in length");
  if (p1.size() == 0) throw std::invalid_argument("eval_binary: no predictions");
  BinaryMetrics m;
  m.n = static_cast<std::size_t>(p1.size());
  const double n = static_cast<double>(m.n);
  std::array<double, kEceBins> bin_count{}, bin_conf{}, bin_pos{};
  double nll_sq = 0.0, brier_sq = 0.0;
  for (Eigen::Index i = 0; i < p1.size(); ++i) {
    const double p = p1(i), y = labels(i);
    if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("eval_binary: probabilities must lie in [0, 1]");
    if (y != 0.0 && y != 1.0) throw std::invalid_argument("eval_binary: labels must be 0 or 1");
    const int pred = p >= 0.5 ? 1 : 0;
    m.accuracy += (pred == static_cast<int>(y)) ? 1.0 : 0.0;
    double py = y == 1.0 ? p : 1.0 - p;
    if (py < kProbClamp) {
      py = kProbClamp;
      m.nll_clamped = true;
    } else if (py > 1.0 - kProbClamp) {
      py = 1.0 - kProbClamp;
    }
    const double l = -std::log(py);
    m.nll += l;
    nll_sq += l * l;
    const double b = (p - y) * (p - y);
    m.brier += b;
    brier_sq += b * b;
    const int bin = std::min(static_cast<int>(std::floor(p * kEceBins)), kEceBins - 1);
    bin_count[bin] += 1.0;
    bin_conf[bin] += p;
    bin_pos[bin] += y;
  }
  m.accuracy /= n;
  m.nll /= n;
  m.brier /= n;
  for (int b = 0; b < kEceBins; ++b)
    if (bin_count[b] > 0.0) m.ece += std::abs(bin_pos[b] - bin_conf[b]) / n;
  auto se = [n](double mean, double sq) { return n > 1 ? std::sqrt(std::max(0.0, sq / n - mean * mean) / (n - 1.0)) : 0.0; };
  m.accuracy_se = se(m.accuracy, m.accuracy * n);
  m.nll_se = se(m.nll, nll_sq);
  m.brier_se = se(m.brier, brier_sq);
  return m;
}

double gaussian_kl(double mu, double s2, double m, double v) {
  if (!(v > 0.0) || !(s2 > 0.0)) throw std::invalid_argument("gaussian_kl: variances must be positive");
  return 0.5 * (std::log(v / s2) + (s2 + (mu - m) * (mu - m)) / v - 1.0);
}

GaussianPredictor model_predictor(const NgmmParams& params, const MarginalRule& rule) {
  if (!params.family().is_gaussian()) throw std::invalid_argument("model_predictor: gaussian family required");
  return [params, rule](const Eigen::MatrixXd& x, double) {
    const auto pred = predict(params, x, rule);
    PredictiveBatch out{Eigen::VectorXd(x.rows()), Eigen::VectorXd(x.rows())};
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      out.mean(i) = pred[i].mean;
      out.variance(i) = pred[i].variance;
    }
    return out;
  };
}

GaussianPredictor bayes_predictor(const SimConfig& config) {
  return [config](const Eigen::MatrixXd& x, double) {
    PredictiveBatch out{Eigen::VectorXd(x.rows()), Eigen::VectorXd(x.rows())};
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const auto g = bayes_predictive(config, x(i, 0), x(i, 1));
      out.mean(i) = g.mean;
      out.variance(i) = g.variance;
    }
    return out;
  };
}

GaussianPredictor conditional_oracle_predictor(const SimConfig& config) {
  return [config](const Eigen::MatrixXd& x, double e) {
    PredictiveBatch out{Eigen::VectorXd(x.rows()), Eigen::VectorXd::Constant(x.rows(), config.sigma_eps * config.sigma_eps)};
    for (Eigen::Index i = 0; i < x.rows(); ++i) out.mean(i) = config.true_mean(x(i, 0), e);
    return out;
  };
}

MonteCarloEstimate estimate_env_avg_risk(const GaussianPredictor& predictor, const TradeoffData& test,
                                         const SimConfig& generator) {
  if (test.latents.size() != test.data.envs.size())
    throw std::invalid_argument("estimate_env_avg_risk: latent record does not match environments");
  if (test.data.envs.empty()) throw std::invalid_argument("estimate_env_avg_risk: no environments");
  const double s2 = generator.sigma_eps * generator.sigma_eps;
  Eigen::VectorXd env_means(static_cast<Eigen::Index>(test.data.envs.size()));
  for (std::size_t j = 0; j < test.data.envs.size(); ++j) {
    const auto& block = test.data.envs[j].block;
    const double e = test.latents[j];
    const PredictiveBatch pred = predictor(block.features, e);
    if (pred.mean.size() != block.size() || pred.variance.size() != block.size())
      throw std::invalid_argument("estimate_env_avg_risk: predictor returned the wrong number of rows");
    double total = 0.0;
    for (Eigen::Index i = 0; i < block.size(); ++i) {
      if (!(pred.variance(i) > 0.0)) throw std::invalid_argument("estimate_env_avg_risk: predictive variance must be > 0");
      total += gaussian_kl(generator.true_mean(block.features(i, 0), e), s2, pred.mean(i), pred.variance(i));
    }
    env_means(static_cast<Eigen::Index>(j)) = total / static_cast<double>(block.size());
  }
  const double m = static_cast<double>(env_means.size());
  const double mean = env_means.mean();
  const double var = m > 1 ? (env_means.array() - mean).square().sum() / (m - 1.0) : 0.0;
  return {mean, std::sqrt(var / m)};
}

MonteCarloEstimate estimate_env_avg_risk(const GaussianPredictor& predictor, const SimConfig& generator,
                                         std::size_t n_mc, std::uint64_t seed) {
  if (n_mc < 1000) throw std::invalid_argument("estimate_env_avg_risk: n_mc must be at least 1000");
  SimConfig cfg = generator;
  cfg.seed = seed;
  cfg.n_envs = static_cast<int>(std::max<std::size_t>(2, n_mc / static_cast<std::size_t>(cfg.n_per_env)));
  return estimate_env_avg_risk(predictor, gen_tradeoff(cfg), cfg);
}

void write_eval_csv(const std::vector<EvalRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "method,env_id,metric,value,stderr,seed\n";
  out.precision(10);
  for (const auto& r : rows)
    out << r.method << ',' << r.env_id << ',' << r.metric << ',' << r.value << ',' << r.std_error << ',' << r.seed << '\n';
}

void append_binary_rows(std::vector<EvalRow>& rows, const std::string& method, const std::string& env_id,
                        const BinaryMetrics& m, std::uint64_t seed) {
  rows.push_back({method, env_id, "accuracy", m.accuracy, m.accuracy_se, seed});
  rows.push_back({method, env_id, "nll", m.nll, m.nll_se, seed});
  rows.push_back({method, env_id, "brier", m.brier, m.brier_se, seed});
  rows.push_back({method, env_id, "ece", m.ece, 0.0, seed});
  rows.push_back({method, env_id, "n", static_cast<double>(m.n), 0.0, seed});
}

}  // namespace ngmm
