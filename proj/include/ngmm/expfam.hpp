#pragma once

#include "ngmm/autodiff.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace ngmm {

enum class FamilyKind { Gaussian, BernoulliLogit };

/// One-parameter exponential-family response with the natural parameter
/// u + gamma, where u is the fixed component and gamma the environment intercept.
///
/// Gaussian: identity link, noise scale sigma_eps supplied by the model.
/// BernoulliLogit: logistic inverse link, y in {0, 1}.
struct ResponseFamily {
  FamilyKind kind = FamilyKind::Gaussian;

  static ResponseFamily gaussian() { return {FamilyKind::Gaussian}; }
  static ResponseFamily bernoulli() { return {FamilyKind::BernoulliLogit}; }

  bool is_gaussian() const { return kind == FamilyKind::Gaussian; }
  bool is_bernoulli() const { return kind == FamilyKind::BernoulliLogit; }

  std::string name() const { return is_gaussian() ? "gaussian" : "bernoulli"; }

  static ResponseFamily parse(const std::string& s) {
    if (s == "gaussian") return gaussian();
    if (s == "bernoulli" || s == "bernoulli_logit") return bernoulli();
    throw std::invalid_argument("unknown response family '" + s + "'");
  }

  friend bool operator==(const ResponseFamily&, const ResponseFamily&) = default;
};

inline constexpr double kHalfLog2Pi = 0.91893853320467274178;

inline double log_logistic(double u) { return ad::detail::log_sigmoid(u); }
inline double logistic(double u) { return ad::detail::logistic(u); }
inline double softplus(double u) { return ad::detail::softplus(u); }

/// Inverse of softplus for positive values.
inline double inverse_softplus(double v) {
  if (!(v > 0.0)) throw std::invalid_argument("inverse_softplus: value must be positive");
  return v > 30.0 ? v : std::log(std::expm1(v));
}

inline void check_response(const ResponseFamily& family, double y) {
  if (family.is_bernoulli() && y != 0.0 && y != 1.0)
    throw std::invalid_argument("bernoulli response must be 0 or 1, got " + std::to_string(y));
  if (!std::isfinite(y)) throw std::invalid_argument("response must be finite");
}

/// log q(y | natural = u + gamma).
inline double log_density(const ResponseFamily& family, double y, double natural, double noise_scale = 1.0) {
  check_response(family, y);
  if (!std::isfinite(natural)) throw std::invalid_argument("log_density: natural parameter must be finite");
  if (family.is_bernoulli()) return y == 1.0 ? log_logistic(natural) : log_logistic(-natural);
  if (!(noise_scale > 0.0)) throw std::invalid_argument("gaussian noise scale must be positive");
  const double r = (y - natural) / noise_scale;
  return -kHalfLog2Pi - std::log(noise_scale) - 0.5 * r * r;
}

inline double log_density(const ResponseFamily& family, double y, double fixed_part, double gamma,
                          double noise_scale) {
  return log_density(family, y, fixed_part + gamma, noise_scale);
}

/// E[y | x, gamma] = inverse_link(u + gamma).
inline double conditional_mean(const ResponseFamily& family, double fixed_part, double gamma) {
  const double natural = fixed_part + gamma;
  return family.is_bernoulli() ? logistic(natural) : natural;
}

/// Elementwise log-density on the tape. `natural` broadcasts against `y`
/// (n x 1 responses against n x k natural parameters); `noise` is a 1x1 scale,
/// ignored for Bernoulli.
inline Var log_density(const ResponseFamily& family, const Var& natural, const Eigen::MatrixXd& y,
                       const Var& noise) {
  Tape& tape = natural.tape();
  for (Eigen::Index i = 0; i < y.size(); ++i) check_response(family, y.data()[i]);
  const Var yv = tape.constant(y);
  if (family.is_bernoulli()) return yv * natural - ad::softplus(natural);
  if (!(noise.scalar() > 0.0)) throw std::invalid_argument("gaussian noise scale must be positive");
  const Var z = (yv - natural) / noise;
  return (-0.5) * ad::square(z) - ad::log(noise) - kHalfLog2Pi;
}

}  // namespace ngmm
