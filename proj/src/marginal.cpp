#include "ngmm/marginal.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace ngmm {

MarginalRule MarginalRule::gauss_hermite(int order) {
  const auto gh = ngmm::gauss_hermite<double>(order);
  MarginalRule rule;
  rule.kind_ = RuleKind::GaussHermite;
  rule.order_ = order;
  rule.nodes_ = (std::numbers::sqrt2 * gh.nodes).transpose();
  rule.log_weights_ = (gh.log_weights.array() - 0.5 * std::log(std::numbers::pi)).matrix().transpose();
  return rule;
}

MarginalRule MarginalRule::truncated_grid(double half_width, int steps) {
  if (!(half_width > 0.0)) throw std::invalid_argument("truncated grid: half width must be positive");
  if (steps < 2) throw std::invalid_argument("truncated grid: at least 2 steps required");
  MarginalRule rule;
  rule.kind_ = RuleKind::TruncatedGrid;
  rule.order_ = steps;
  rule.half_width_ = half_width;
  const double h = 2.0 * half_width / steps;
  rule.nodes_.resize(steps + 1);
  rule.log_weights_.resize(steps + 1);
  for (int j = 0; j <= steps; ++j) {
    const double z = -half_width + j * h;
    rule.nodes_(j) = z;
    rule.log_weights_(j) = std::log(h) - kHalfLog2Pi - 0.5 * z * z + ((j == 0 || j == steps) ? -std::log(2.0) : 0.0);
  }
  return rule;
}

MarginalRule MarginalRule::gaussian_closed_form() {
  MarginalRule rule;
  rule.kind_ = RuleKind::GaussianClosedForm;
  return rule;
}

MarginalRule MarginalRule::parse(const std::string& spec) {
  std::vector<std::string> parts;
  std::stringstream ss(spec);
  for (std::string item; std::getline(ss, item, ':');) parts.push_back(item);
  if (parts.empty()) throw std::invalid_argument("empty marginal rule");
  try {
    if (parts[0] == "closed" && parts.size() == 1) return gaussian_closed_form();
    if (parts[0] == "gh" && parts.size() == 2) return gauss_hermite(std::stoi(parts[1]));
    if (parts[0] == "grid" && parts.size() == 3) return truncated_grid(std::stod(parts[1]), std::stoi(parts[2]));
  } catch (const std::logic_error&) {
  }
  throw std::invalid_argument("cannot parse marginal rule '" + spec + "' (expected closed, gh:N or grid:B:N)");
}

std::string MarginalRule::describe() const {
  std::ostringstream os;
  switch (kind_) {
    case RuleKind::GaussHermite: os << "gh:" << order_; break;
    case RuleKind::TruncatedGrid: os << "grid:" << half_width_ << ':' << order_; break;
    case RuleKind::GaussianClosedForm: os << "closed"; break;
  }
  return os.str();
}

void EnvBlock::validate() const {
  if (responses.size() < 1) throw std::invalid_argument("environment block is empty");
  if (features.rows() != responses.size())
    throw std::invalid_argument("environment block: feature rows do not match response count");
  if (!features.allFinite()) throw std::invalid_argument("environment block: non-finite input features");
  if (!responses.allFinite()) throw std::invalid_argument("environment block: non-finite responses");
}

Var block_marginal_loglik(const ResponseFamily& family, const Var& fixed_part, const Eigen::VectorXd& y,
                          const Var& sigma, const Var& noise, const MarginalRule& rule,
                          const std::vector<Eigen::Index>& offsets) {
  Tape& tape = fixed_part.tape();
  if (fixed_part.cols() != 1 || fixed_part.rows() != y.size())
    throw std::invalid_argument("block_marginal_loglik: fixed part must be n x 1 matching responses");
  if (!(sigma.scalar() > 0.0)) throw std::invalid_argument("intercept scale sigma must be positive");

  if (rule.kind() == RuleKind::GaussianClosedForm) {
    if (!family.is_gaussian()) throw std::invalid_argument("closed-form marginal requires the gaussian family");
    if (!(noise.scalar() > 0.0)) throw std::invalid_argument("gaussian noise scale must be positive");
    const auto m = static_cast<Eigen::Index>(offsets.size() - 1);
    Eigen::MatrixXd counts(m, 1);
    for (Eigen::Index s = 0; s < m; ++s) counts(s, 0) = static_cast<double>(offsets[s + 1] - offsets[s]);
    const Var n = tape.constant(counts);
    const Var resid = tape.constant(Eigen::MatrixXd(y)) - fixed_part;
    const Var s1 = ad::segment_sum(resid, offsets);
    const Var s2 = ad::segment_sum(ad::square(resid), offsets);
    const Var tau2 = ad::square(sigma);
    const Var eps2 = ad::square(noise);
    const Var denom = eps2 + n * tau2;
    const Var quad = (s2 - tau2 * ad::square(s1) / denom) / eps2;
    const Var logdet = (n - 1.0) * ad::log(eps2) + ad::log(denom);
    return (-0.5) * (n * (2.0 * kHalfLog2Pi) + logdet + quad);
  }

  const Var gamma = sigma * tape.constant(Eigen::MatrixXd(rule.nodes()));
  const Var natural = fixed_part + gamma;  // n x k
  const Var logq = log_density(family, natural, y, noise);
  const Var per_node = ad::segment_sum(logq, offsets) + tape.constant(Eigen::MatrixXd(rule.log_weights()));
  return ad::logsumexp_rows(per_node);
}

double env_marginal_loglik(const ResponseFamily& family, const Eigen::VectorXd& fixed_part,
                           const Eigen::VectorXd& y, double sigma, double noise, const MarginalRule& rule) {
  if (y.size() < 1) throw std::invalid_argument("env_marginal_loglik: empty environment");
  Tape tape;
  const Var u = tape.constant(Eigen::MatrixXd(fixed_part));
  const Var out = block_marginal_loglik(family, u, y, tape.constant(sigma), tape.constant(noise), rule,
                                        {0, static_cast<Eigen::Index>(y.size())});
  return out.scalar();
}

Predictive marginal_predictive(const ResponseFamily& family, double fixed_part, double sigma, double noise,
                               const MarginalRule& rule) {
  if (!(sigma > 0.0)) throw std::invalid_argument("intercept scale sigma must be positive");
  if (!std::isfinite(fixed_part)) throw std::invalid_argument("fixed part must be finite");
  if (family.is_gaussian()) {
    if (!(noise > 0.0)) throw std::invalid_argument("gaussian noise scale must be positive");
    return {family, fixed_part, noise * noise + sigma * sigma};
  }
  if (rule.kind() == RuleKind::GaussianClosedForm)
    throw std::invalid_argument("closed-form marginal requires the gaussian family");
  const auto& z = rule.nodes();
  const auto& lw = rule.log_weights();
  double p1 = 0.0;
  for (Eigen::Index k = 0; k < z.size(); ++k) p1 += std::exp(lw(k)) * logistic(fixed_part + sigma * z(k));
  return {family, p1, p1 * (1.0 - p1)};
}

}  // namespace ngmm
