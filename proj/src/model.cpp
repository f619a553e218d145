#include "ngmm/model.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace ngmm {

std::string Architecture::describe() const {
  std::ostringstream os;
  os << input_dim;
  for (auto h : hidden) os << '-' << h;
  return os.str();
}

std::vector<Eigen::Index> Architecture::parse_hidden(const std::string& spec) {
  std::vector<Eigen::Index> out;
  if (spec.empty() || spec == "none") return out;
  std::stringstream ss(spec);
  for (std::string item; std::getline(ss, item, ',');) {
    const long v = std::stol(item);
    if (v <= 0) throw std::invalid_argument("hidden widths must be positive");
    out.push_back(v);
  }
  return out;
}

NgmmParams NgmmParams::initialize(const ResponseFamily& family, const Architecture& arch, Philox& rng,
                                  const InitOptions& options) {
  if (arch.input_dim <= 0) throw std::invalid_argument("architecture input dimension must be positive");
  NgmmParams p;
  p.family_ = family;
  p.arch_ = arch;
  Eigen::Index fan_in = arch.input_dim;
  for (std::size_t i = 0; i < arch.hidden.size(); ++i) {
    p.values_.add(layer_weight(i), fan_in, arch.hidden[i]);
    p.values_.add(layer_bias(i), 1, arch.hidden[i]);
    fan_in = arch.hidden[i];
  }
  p.values_.add("head.weight", fan_in, 1);
  p.values_.add("head.bias", 1, 1);
  if (family.is_gaussian()) p.values_.add("noise.raw", 1, 1);
  if (options.random_intercept) p.values_.add("sigma.raw", 1, 1);

  auto glorot = [&](const std::string& name) {
    auto w = p.values_.segment(name);
    const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = rng.uniform(-limit, limit);
  };
  for (std::size_t i = 0; i < arch.hidden.size(); ++i) glorot(layer_weight(i));
  glorot("head.weight");
  if (family.is_gaussian()) p.values_.segment("noise.raw")(0, 0) = inverse_softplus(options.noise);
  if (options.random_intercept) p.values_.segment("sigma.raw")(0, 0) = inverse_softplus(options.sigma);
  return p;
}

void NgmmParams::set_values(ParamVector v) {
  if (!v.same_layout(values_)) throw std::invalid_argument("set_values: layout mismatch");
  values_ = std::move(v);
}

double NgmmParams::sigma() const {
  if (!has_random_intercept()) throw std::logic_error("predictor has no random intercept");
  return softplus(values_.segment("sigma.raw")(0, 0));
}

double NgmmParams::noise() const {
  return family_.is_gaussian() ? softplus(values_.segment("noise.raw")(0, 0)) : 1.0;
}

Eigen::MatrixXd NgmmParams::representation(const Eigen::MatrixXd& x) const {
  if (x.cols() != arch_.input_dim) throw std::invalid_argument("input width does not match the architecture");
  Eigen::MatrixXd h = x;
  for (std::size_t i = 0; i < arch_.hidden.size(); ++i) {
    h = h * values_.segment(layer_weight(i));
    h.rowwise() += values_.segment(layer_bias(i)).row(0);
    h = h.cwiseMax(0.0);
  }
  return h;
}

Eigen::VectorXd NgmmParams::fixed_part(const Eigen::MatrixXd& x) const {
  Eigen::VectorXd u = representation(x) * values_.segment("head.weight");
  u.array() += values_.segment("head.bias")(0, 0);
  return u;
}

Var representation(const BoundParams& p, const Architecture& arch, const Var& x) {
  Var h = x;
  for (std::size_t i = 0; i < arch.hidden.size(); ++i)
    h = ad::relu(ad::affine(h, p[NgmmParams::layer_weight(i)], p[NgmmParams::layer_bias(i)]));
  return h;
}

Var fixed_part(const BoundParams& p, const Architecture& arch, const Var& x) {
  return ad::affine(representation(p, arch, x), p["head.weight"], p["head.bias"]);
}

Var intercept_scale(const BoundParams& p) { return ad::softplus(p["sigma.raw"]); }

Var noise_scale(const BoundParams& p, const ResponseFamily& family) {
  if (family.is_gaussian()) return ad::softplus(p["noise.raw"]);
  return p.tape().constant(1.0);
}

double log_density(const NgmmParams& params, double y, const Eigen::RowVectorXd& x, double gamma) {
  if (!std::isfinite(gamma)) throw std::invalid_argument("gamma must be finite");
  const double u = params.fixed_part(x)(0);
  return log_density(params.family(), y, u, gamma, params.noise());
}

double conditional_mean(const NgmmParams& params, const Eigen::RowVectorXd& x, double gamma) {
  if (!std::isfinite(gamma)) throw std::invalid_argument("gamma must be finite");
  return conditional_mean(params.family(), params.fixed_part(x)(0), gamma);
}

double env_marginal_loglik(const NgmmParams& params, const EnvBlock& block, const MarginalRule& rule) {
  block.validate();
  return env_marginal_loglik(params.family(), params.fixed_part(block.features), block.responses, params.sigma(),
                             params.noise(), rule);
}

void check_block_family(const ResponseFamily& family, const EnvBlock& block) {
  for (Eigen::Index i = 0; i < block.responses.size(); ++i) check_response(family, block.responses(i));
}

namespace {

Predictive predict_fixed(const NgmmParams& params, double u, const MarginalRule& rule) {
  if (params.has_random_intercept()) {
    const MarginalRule& r =
        (params.family().is_bernoulli() && rule.kind() == RuleKind::GaussianClosedForm) ? default_rule() : rule;
    return marginal_predictive(params.family(), u, params.sigma(), params.noise(), r);
  }
  if (params.family().is_gaussian()) {
    const double s = params.noise();
    return {params.family(), u, s * s};
  }
  const double p1 = logistic(u);
  return {params.family(), p1, p1 * (1.0 - p1)};
}

}  // namespace

const MarginalRule& default_rule() {
  static const MarginalRule rule = MarginalRule::gauss_hermite(64);
  return rule;
}

Predictive predict(const NgmmParams& params, const Eigen::RowVectorXd& x, const MarginalRule& rule) {
  return predict_fixed(params, params.fixed_part(x)(0), rule);
}

std::vector<Predictive> predict(const NgmmParams& params, const Eigen::MatrixXd& x, const MarginalRule& rule) {
  const Eigen::VectorXd u = params.fixed_part(x);
  std::vector<Predictive> out;
  out.reserve(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) out.push_back(predict_fixed(params, u(i), rule));
  return out;
}

int classify_fast(const ResponseFamily& family, double fixed_part) {
  if (!family.is_bernoulli()) throw std::invalid_argument("classify_fast requires the bernoulli family");
  if (!std::isfinite(fixed_part)) throw std::invalid_argument("fixed part must be finite");
  return fixed_part >= 0.0 ? 1 : 0;
}

int classify_fast(const NgmmParams& params, const Eigen::RowVectorXd& x) {
  if (!params.family().is_bernoulli()) throw std::invalid_argument("classify_fast requires the bernoulli family");
  return classify_fast(params.family(), params.fixed_part(x)(0));
}

}  // namespace ngmm
