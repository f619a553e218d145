#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace ngmm {

/// Nodes and weights of an n-point Gauss-Hermite rule for the weight e^{-t^2}.
template <typename Scalar>
struct GaussHermite {
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> nodes;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> weights;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> log_weights;
};

/// Golub-Welsch eigen-decomposition of the Jacobi matrix for initial nodes,
/// polished by Newton steps on the orthonormal Hermite recurrence. Weights are
/// 2 / (p_n'(t))^2 in the orthonormal scaling, which stays in range up to
/// orders of several hundred.
template <typename Scalar = double>
GaussHermite<Scalar> gauss_hermite(int n) {
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  if (n < 1) throw std::invalid_argument("gauss_hermite: order must be at least 1");

  Mat jacobi = Mat::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const Scalar off = std::sqrt(static_cast<Scalar>(k) / 2);
    jacobi(k, k - 1) = off;
    jacobi(k - 1, k) = off;
  }
  Eigen::SelfAdjointEigenSolver<Mat> solver(jacobi, Eigen::EigenvaluesOnly);
  Vec t = solver.eigenvalues();

  const Scalar pim4 = std::pow(std::numbers::pi_v<Scalar>, Scalar(-0.25));
  auto recurrence = [&](Scalar x, Scalar& pn, Scalar& pn1) {
    Scalar p1 = pim4;
    Scalar p2 = 0;
    for (int j = 1; j <= n; ++j) {
      const Scalar p3 = p2;
      p2 = p1;
      p1 = x * std::sqrt(Scalar(2) / j) * p2 - std::sqrt(static_cast<Scalar>(j - 1) / j) * p3;
    }
    pn = p1;
    pn1 = p2;
  };

  GaussHermite<Scalar> rule{Vec(n), Vec(n), Vec(n)};
  for (int i = 0; i < n; ++i) {
    Scalar x = t(i);
    Scalar pn = 0;
    Scalar pn1 = 0;
    Scalar deriv = 0;
    for (int it = 0; it < 8; ++it) {
      recurrence(x, pn, pn1);
      deriv = std::sqrt(Scalar(2) * n) * pn1;
      const Scalar dx = pn / deriv;
      x -= dx;
      if (std::abs(dx) <= std::numeric_limits<Scalar>::epsilon() * (1 + std::abs(x))) break;
    }
    recurrence(x, pn, pn1);
    deriv = std::sqrt(Scalar(2) * n) * pn1;
    rule.nodes(i) = x;
    rule.log_weights(i) = std::log(Scalar(2)) - 2 * std::log(std::abs(deriv));
    rule.weights(i) = std::exp(rule.log_weights(i));
  }
  // Symmetrize: the rule is exactly even.
  for (int i = 0; i < n / 2; ++i) {
    const int j = n - 1 - i;
    const Scalar node = (rule.nodes(j) - rule.nodes(i)) / 2;
    rule.nodes(i) = -node;
    rule.nodes(j) = node;
    const Scalar lw = (rule.log_weights(i) + rule.log_weights(j)) / 2;
    rule.log_weights(i) = rule.log_weights(j) = lw;
    rule.weights(i) = rule.weights(j) = std::exp(lw);
  }
  if (n % 2 == 1) rule.nodes(n / 2) = 0;
  return rule;
}

}  // namespace ngmm
