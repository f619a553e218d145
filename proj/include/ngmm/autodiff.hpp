#pragma once

#include "ngmm/param_vector.hpp"
#include "ngmm/tape.hpp"

#include <cmath>
#include <string>
#include <unordered_map>
#include <utility>

namespace ngmm {

using Tape = ad::Tape<double>;
using Var = ad::Var<double>;

/// Parameter segments recorded as tape variables.
class BoundParams {
 public:
  BoundParams(Tape& tape, const ParamVector& params) : tape_(&tape) {
    for (const auto& s : params.segments()) vars_.emplace(s.name, tape.variable(params.segment(s.name)));
  }

  Var operator[](const std::string& name) const {
    auto it = vars_.find(name);
    if (it == vars_.end()) throw std::out_of_range("parameter segment '" + name + "' is not bound");
    return it->second;
  }
  bool contains(const std::string& name) const { return vars_.count(name) != 0; }
  Tape& tape() const { return *tape_; }

  /// Gather adjoints into a gradient with the layout of `params`.
  ParamVector gradient(const ParamVector& params) const {
    ParamVector grad = params.zeros_like();
    for (const auto& s : params.segments()) {
      const auto& adj = tape_->adjoint(vars_.at(s.name));
      if (adj.size() != 0) grad.segment(s.name) = adj;
    }
    return grad;
  }

 private:
  Tape* tape_;
  std::unordered_map<std::string, Var> vars_;
};

struct Evaluation {
  double value;
  ParamVector grad;
};

/// Evaluate `objective(tape, bound)` -> 1x1 Var at `params` and return its
/// exact gradient with respect to every parameter segment.
template <typename Objective>
Evaluation forward_backward(Objective&& objective, const ParamVector& params) {
  Tape tape;
  BoundParams bound(tape, params);
  Var root = objective(tape, bound);
  tape.backward(root);
  return {root.scalar(), bound.gradient(params)};
}

/// Objective value only; no reverse sweep.
template <typename Objective>
double forward_value(Objective&& objective, const ParamVector& params) {
  Tape tape;
  BoundParams bound(tape, params);
  return objective(tape, bound).scalar();
}

/// Central finite-difference gradient, independent of the tape's reverse sweep.
template <typename Objective>
Eigen::VectorXd finite_difference_gradient(Objective&& objective, const ParamVector& params,
                                           double step = 1e-5) {
  Eigen::VectorXd g(params.size());
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    ParamVector plus = params;
    ParamVector minus = params;
    plus.flat()(i) += step;
    minus.flat()(i) -= step;
    g(i) = (forward_value(objective, plus) - forward_value(objective, minus)) / (2.0 * step);
  }
  return g;
}

struct GradientCheck {
  double max_relative_error = 0.0;
  double max_absolute_error = 0.0;
  bool passed = true;
};

/// Per-coordinate comparison: relative error below `rel_tol`, or absolute error
/// below `abs_tol` for coordinates whose magnitude is below `small`.
template <typename Objective>
GradientCheck check_gradient(Objective&& objective, const ParamVector& params, double rel_tol = 1e-4,
                             double abs_tol = 1e-6, double small = 1e-3, double step = 1e-5) {
  const Evaluation eval = forward_backward(objective, params);
  const Eigen::VectorXd fd = finite_difference_gradient(objective, params, step);
  GradientCheck out;
  for (Eigen::Index i = 0; i < fd.size(); ++i) {
    const double a = eval.grad.flat()(i);
    const double b = fd(i);
    const double abs_err = std::abs(a - b);
    const double scale = std::max(std::abs(a), std::abs(b));
    const double rel_err = scale > 0.0 ? abs_err / scale : 0.0;
    out.max_absolute_error = std::max(out.max_absolute_error, abs_err);
    if (scale < small) {
      if (abs_err >= abs_tol) out.passed = false;
    } else {
      out.max_relative_error = std::max(out.max_relative_error, rel_err);
      if (rel_err >= rel_tol) out.passed = false;
    }
  }
  return out;
}

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// First and second moment accumulators for Adam.
struct AdamState {
  Eigen::VectorXd first;
  Eigen::VectorXd second;
  long step = 0;

  static AdamState for_params(const ParamVector& params) {
    return {Eigen::VectorXd::Zero(params.size()), Eigen::VectorXd::Zero(params.size()), 0};
  }
};

/// One bias-corrected Adam update (Kingma & Ba, 2015) on a descent direction.
inline ParamVector adam_step(const ParamVector& params, const ParamVector& grad, AdamState& state, double lr,
                             const AdamOptions& opt = {}) {
  if (!(lr >= 0.0)) throw std::invalid_argument("adam_step: learning rate must be nonnegative");
  if (!params.same_layout(grad) || state.first.size() != params.size() || state.second.size() != params.size())
    throw std::invalid_argument("adam_step: dimension mismatch between parameters, gradient and state");
  const Eigen::VectorXd& g = grad.flat();
  state.step += 1;
  state.first = opt.beta1 * state.first + (1.0 - opt.beta1) * g;
  state.second = opt.beta2 * state.second + (1.0 - opt.beta2) * g.cwiseAbs2();
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.step));
  ParamVector out = params;
  out.flat().array() -=
      lr * (state.first.array() / c1) / ((state.second.array() / c2).sqrt() + opt.epsilon);
  return out;
}

}  // namespace ngmm
