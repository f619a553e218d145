#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace ngmm::ad {

enum class Op : std::uint8_t {
  Variable,
  Constant,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  MatMul,
  Affine,
  Exp,
  Log,
  Square,
  Relu,
  Logistic,
  Softplus,
  LogSigmoid,
  Sum,
  SegmentSum,
  LogSumExpRows,
  LogSumExp,
};

inline const char* op_name(Op op) {
  switch (op) {
    case Op::Variable: return "variable";
    case Op::Constant: return "constant";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Neg: return "neg";
    case Op::MatMul: return "matmul";
    case Op::Affine: return "affine";
    case Op::Exp: return "exp";
    case Op::Log: return "log";
    case Op::Square: return "square";
    case Op::Relu: return "relu";
    case Op::Logistic: return "logistic";
    case Op::Softplus: return "softplus";
    case Op::LogSigmoid: return "log_sigmoid";
    case Op::Sum: return "sum";
    case Op::SegmentSum: return "segment_sum";
    case Op::LogSumExpRows: return "logsumexp_rows";
    case Op::LogSumExp: return "logsumexp";
  }
  return "unknown";
}

/// Raised when a primitive produces a NaN or infinity.
class NonFiniteError : public std::runtime_error {
 public:
  NonFiniteError(Op op, std::size_t node)
      : std::runtime_error(std::string("non-finite value produced by primitive '") + op_name(op) +
                           "' at node " + std::to_string(node)),
        op_(op),
        node_(node) {}
  Op op() const { return op_; }
  std::size_t node() const { return node_; }

 private:
  Op op_;
  std::size_t node_;
};

template <typename Scalar>
class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
template <typename Scalar>
class Var {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Var() = default;
  Var(Tape<Scalar>* tape, std::size_t index) : tape_(tape), index_(index) {}

  Tape<Scalar>& tape() const { return *tape_; }
  std::size_t index() const { return index_; }
  bool valid() const { return tape_ != nullptr; }

  const Matrix& value() const { return tape_->value(*this); }
  Scalar scalar() const { return tape_->value(*this)(0, 0); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }

 private:
  Tape<Scalar>* tape_ = nullptr;
  std::size_t index_ = 0;
};

namespace detail {

template <typename Scalar>
Scalar softplus(Scalar u) {
  return std::max(u, Scalar(0)) + std::log1p(std::exp(-std::abs(u)));
}

template <typename Scalar>
Scalar logistic(Scalar u) {
  if (u >= 0) return Scalar(1) / (Scalar(1) + std::exp(-u));
  const Scalar e = std::exp(u);
  return e / (Scalar(1) + e);
}

template <typename Scalar>
Scalar log_sigmoid(Scalar u) {
  return u >= 0 ? -std::log1p(std::exp(-u)) : u - std::log1p(std::exp(u));
}

}  // namespace detail

/// Reverse-mode tape over dense matrix values.
///
/// Nodes are appended in evaluation order, so inputs always precede their
/// consumers and a single reverse sweep accumulates exact adjoints.
/// Elementwise binary primitives broadcast operands whose extent is 1 along a
/// dimension (scalar, row vector, column vector).
template <typename Scalar>
class Tape {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Handle = Var<Scalar>;
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

  Tape() { nodes_.reserve(64); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Handle variable(Matrix value) { return push(Op::Variable, std::move(value), {}, true); }
  Handle constant(Matrix value) { return push(Op::Constant, std::move(value), {}, false); }
  Handle constant(Scalar value) { return constant(Matrix::Constant(1, 1, value)); }

  const Matrix& value(Handle v) const { return nodes_[v.index()].value; }

  /// Accumulated adjoint; zero-shaped for nodes untouched by the last sweep.
  const Matrix& adjoint(Handle v) const { return nodes_[v.index()].adjoint; }

  std::size_t size() const { return nodes_.size(); }

  /// Reverse sweep from a 1x1 root.
  void backward(Handle root) {
    if (value(root).size() != 1) throw std::invalid_argument("backward: root must be a 1x1 value");
    for (auto& n : nodes_) n.adjoint.resize(0, 0);
    nodes_[root.index()].adjoint = Matrix::Ones(1, 1);
    for (std::size_t i = root.index() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.adjoint.size() == 0) continue;
      propagate(i);
    }
  }

  // ---- recording, used by the free-function primitives below ----

  Handle record(Op op, Matrix value, std::array<std::size_t, 3> inputs,
                std::vector<Eigen::Index> offsets = {}) {
    bool needs = false;
    for (auto in : inputs)
      if (in != kNone) needs = needs || nodes_[in].needs_grad;
    Handle h = push(op, std::move(value), inputs, needs);
    nodes_.back().offsets = std::move(offsets);
    return h;
  }

 private:
  struct Node {
    Op op;
    std::array<std::size_t, 3> inputs;
    Matrix value;
    Matrix adjoint;
    std::vector<Eigen::Index> offsets;
    bool needs_grad;
  };

  Handle push(Op op, Matrix value, std::array<std::size_t, 3> inputs, bool needs_grad) {
    if (op == Op::Variable || op == Op::Constant) inputs = {kNone, kNone, kNone};
    const std::size_t index = nodes_.size();
    if (!value.allFinite()) throw NonFiniteError(op, index);
    nodes_.push_back(Node{op, inputs, std::move(value), Matrix(), {}, needs_grad});
    return Handle(this, index);
  }

  // Sum `g` down to an r x c operand that was broadcast to g's shape.
  static Matrix reduce_to(const Matrix& g, Eigen::Index r, Eigen::Index c) {
    if (g.rows() == r && g.cols() == c) return g;
    if (r == 1 && c == 1) return Matrix::Constant(1, 1, g.sum());
    if (r == 1) return g.colwise().sum();
    return g.rowwise().sum();
  }

  static Matrix expand(const Matrix& m, Eigen::Index r, Eigen::Index c) {
    if (m.rows() == r && m.cols() == c) return m;
    return m.replicate(r / m.rows(), c / m.cols());
  }

  void accumulate(std::size_t index, const Matrix& g) {
    Node& n = nodes_[index];
    if (!n.needs_grad) return;
    if (n.adjoint.size() == 0)
      n.adjoint = g;
    else
      n.adjoint += g;
  }

  void propagate(std::size_t i) {
    // Copies keep references stable if accumulate() touches this node's storage.
    const Node& n = nodes_[i];
    const Matrix g = n.adjoint;
    const auto a = n.inputs[0];
    const auto b = n.inputs[1];
    const auto c = n.inputs[2];
    auto in = [&](std::size_t k) -> const Matrix& { return nodes_[k].value; };
    const Matrix& out = n.value;
    switch (n.op) {
      case Op::Variable:
      case Op::Constant:
        break;
      case Op::Add:
        accumulate(a, reduce_to(g, in(a).rows(), in(a).cols()));
        accumulate(b, reduce_to(g, in(b).rows(), in(b).cols()));
        break;
      case Op::Sub:
        accumulate(a, reduce_to(g, in(a).rows(), in(a).cols()));
        accumulate(b, -reduce_to(g, in(b).rows(), in(b).cols()));
        break;
      case Op::Mul: {
        if (nodes_[a].needs_grad) {
          const Matrix gb = (g.array() * expand(in(b), g.rows(), g.cols()).array()).matrix();
          accumulate(a, reduce_to(gb, in(a).rows(), in(a).cols()));
        }
        if (nodes_[b].needs_grad) {
          const Matrix ga = (g.array() * expand(in(a), g.rows(), g.cols()).array()).matrix();
          accumulate(b, reduce_to(ga, in(b).rows(), in(b).cols()));
        }
        break;
      }
      case Op::Div: {
        const Matrix denom = expand(in(b), g.rows(), g.cols());
        if (nodes_[a].needs_grad) {
          const Matrix ga = (g.array() / denom.array()).matrix();
          accumulate(a, reduce_to(ga, in(a).rows(), in(a).cols()));
        }
        if (nodes_[b].needs_grad) {
          const Matrix gb = (-g.array() * out.array() / denom.array()).matrix();
          accumulate(b, reduce_to(gb, in(b).rows(), in(b).cols()));
        }
        break;
      }
      case Op::Neg:
        accumulate(a, -g);
        break;
      case Op::MatMul:
        if (nodes_[a].needs_grad) accumulate(a, g * in(b).transpose());
        if (nodes_[b].needs_grad) accumulate(b, in(a).transpose() * g);
        break;
      case Op::Affine:
        if (nodes_[a].needs_grad) accumulate(a, g * in(b).transpose());
        if (nodes_[b].needs_grad) accumulate(b, in(a).transpose() * g);
        if (nodes_[c].needs_grad) accumulate(c, g.colwise().sum());
        break;
      case Op::Exp:
        accumulate(a, (g.array() * out.array()).matrix());
        break;
      case Op::Log:
        accumulate(a, (g.array() / in(a).array()).matrix());
        break;
      case Op::Square:
        accumulate(a, (Scalar(2) * g.array() * in(a).array()).matrix());
        break;
      case Op::Relu:
        accumulate(a, (in(a).array() > Scalar(0)).select(g.array(), Scalar(0)).matrix());
        break;
      case Op::Logistic:
        accumulate(a, (g.array() * out.array() * (Scalar(1) - out.array())).matrix());
        break;
      case Op::Softplus:
        accumulate(a, (g.array() * in(a).array().unaryExpr([](Scalar u) { return detail::logistic(u); })).matrix());
        break;
      case Op::LogSigmoid:
        accumulate(a, (g.array() * in(a).array().unaryExpr([](Scalar u) { return detail::logistic(-u); })).matrix());
        break;
      case Op::Sum:
        accumulate(a, Matrix::Constant(in(a).rows(), in(a).cols(), g(0, 0)));
        break;
      case Op::SegmentSum: {
        Matrix ga(in(a).rows(), in(a).cols());
        for (std::size_t s = 0; s + 1 < n.offsets.size(); ++s) {
          const Eigen::Index lo = n.offsets[s];
          const Eigen::Index len = n.offsets[s + 1] - lo;
          ga.middleRows(lo, len) = g.row(static_cast<Eigen::Index>(s)).replicate(len, 1);
        }
        accumulate(a, ga);
        break;
      }
      case Op::LogSumExpRows: {
        const Matrix w = (in(a).colwise() - out.col(0)).array().exp().matrix();
        accumulate(a, (w.array().colwise() * g.col(0).array()).matrix());
        break;
      }
      case Op::LogSumExp: {
        const Matrix w = (in(a).array() - out(0, 0)).exp().matrix();
        accumulate(a, g(0, 0) * w);
        break;
      }
    }
  }

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Primitives

namespace detail {

template <typename Scalar>
void check_same_tape(const Var<Scalar>& a, const Var<Scalar>& b) {
  if (&a.tape() != &b.tape()) throw std::invalid_argument("operands recorded on different tapes");
}

inline Eigen::Index broadcast_extent(Eigen::Index x, Eigen::Index y, const char* what) {
  if (x == y || y == 1) return x;
  if (x == 1) return y;
  throw std::invalid_argument(std::string(what) + ": incompatible shapes for broadcasting");
}

template <typename Scalar, typename F>
Var<Scalar> binary(Op op, const Var<Scalar>& a, const Var<Scalar>& b, F f) {
  check_same_tape(a, b);
  using Matrix = typename Var<Scalar>::Matrix;
  const Matrix& x = a.value();
  const Matrix& y = b.value();
  const Eigen::Index r = broadcast_extent(x.rows(), y.rows(), op_name(op));
  const Eigen::Index c = broadcast_extent(x.cols(), y.cols(), op_name(op));
  Matrix out(r, c);
  if (x.rows() == r && x.cols() == c && y.rows() == r && y.cols() == c) {
    out = f(x.array(), y.array()).matrix();
  } else {
    const Matrix xe = x.replicate(r / x.rows(), c / x.cols());
    const Matrix ye = y.replicate(r / y.rows(), c / y.cols());
    out = f(xe.array(), ye.array()).matrix();
  }
  return a.tape().record(op, std::move(out), {a.index(), b.index(), Tape<Scalar>::kNone});
}

template <typename Scalar, typename F>
Var<Scalar> unary(Op op, const Var<Scalar>& a, F f) {
  typename Var<Scalar>::Matrix out = a.value().unaryExpr(f);
  return a.tape().record(op, std::move(out), {a.index(), Tape<Scalar>::kNone, Tape<Scalar>::kNone});
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, const Var<Scalar>& b) {
  return detail::binary(Op::Add, a, b, [](const auto& x, const auto& y) { return x + y; });
}
template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, const Var<Scalar>& b) {
  return detail::binary(Op::Sub, a, b, [](const auto& x, const auto& y) { return x - y; });
}
template <typename Scalar>
Var<Scalar> operator*(const Var<Scalar>& a, const Var<Scalar>& b) {
  return detail::binary(Op::Mul, a, b, [](const auto& x, const auto& y) { return x * y; });
}
template <typename Scalar>
Var<Scalar> operator/(const Var<Scalar>& a, const Var<Scalar>& b) {
  return detail::binary(Op::Div, a, b, [](const auto& x, const auto& y) { return x / y; });
}
template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a) {
  return detail::unary(Op::Neg, a, [](Scalar u) { return -u; });
}

template <typename Scalar>
Var<Scalar> operator+(const Var<Scalar>& a, Scalar s) { return a + a.tape().constant(s); }
template <typename Scalar>
Var<Scalar> operator+(Scalar s, const Var<Scalar>& a) { return a.tape().constant(s) + a; }
template <typename Scalar>
Var<Scalar> operator-(const Var<Scalar>& a, Scalar s) { return a - a.tape().constant(s); }
template <typename Scalar>
Var<Scalar> operator-(Scalar s, const Var<Scalar>& a) { return a.tape().constant(s) - a; }
template <typename Scalar>
Var<Scalar> operator*(const Var<Scalar>& a, Scalar s) { return a * a.tape().constant(s); }
template <typename Scalar>
Var<Scalar> operator*(Scalar s, const Var<Scalar>& a) { return a.tape().constant(s) * a; }
template <typename Scalar>
Var<Scalar> operator/(const Var<Scalar>& a, Scalar s) { return a / a.tape().constant(s); }

template <typename Scalar>
Var<Scalar> matmul(const Var<Scalar>& a, const Var<Scalar>& b) {
  detail::check_same_tape(a, b);
  if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dimensions differ");
  typename Var<Scalar>::Matrix out = a.value() * b.value();
  return a.tape().record(Op::MatMul, std::move(out), {a.index(), b.index(), Tape<Scalar>::kNone});
}

/// x * w + 1 * bias, with bias a 1 x cols(w) row.
template <typename Scalar>
Var<Scalar> affine(const Var<Scalar>& x, const Var<Scalar>& w, const Var<Scalar>& bias) {
  detail::check_same_tape(x, w);
  detail::check_same_tape(x, bias);
  if (x.cols() != w.rows() || bias.rows() != 1 || bias.cols() != w.cols())
    throw std::invalid_argument("affine: shape mismatch");
  typename Var<Scalar>::Matrix out = x.value() * w.value();
  out.rowwise() += bias.value().row(0);
  return x.tape().record(Op::Affine, std::move(out), {x.index(), w.index(), bias.index()});
}

template <typename Scalar>
Var<Scalar> exp(const Var<Scalar>& a) {
  return detail::unary(Op::Exp, a, [](Scalar u) { return std::exp(u); });
}
template <typename Scalar>
Var<Scalar> log(const Var<Scalar>& a) {
  return detail::unary(Op::Log, a, [](Scalar u) { return std::log(u); });
}
template <typename Scalar>
Var<Scalar> square(const Var<Scalar>& a) {
  return detail::unary(Op::Square, a, [](Scalar u) { return u * u; });
}
template <typename Scalar>
Var<Scalar> relu(const Var<Scalar>& a) {
  return detail::unary(Op::Relu, a, [](Scalar u) { return u > Scalar(0) ? u : Scalar(0); });
}
template <typename Scalar>
Var<Scalar> logistic(const Var<Scalar>& a) {
  return detail::unary(Op::Logistic, a, [](Scalar u) { return detail::logistic(u); });
}
/// log(1 + e^u), evaluated without overflow.
template <typename Scalar>
Var<Scalar> softplus(const Var<Scalar>& a) {
  return detail::unary(Op::Softplus, a, [](Scalar u) { return detail::softplus(u); });
}
template <typename Scalar>
Var<Scalar> log_sigmoid(const Var<Scalar>& a) {
  return detail::unary(Op::LogSigmoid, a, [](Scalar u) { return detail::log_sigmoid(u); });
}

template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& a) {
  typename Var<Scalar>::Matrix out = Var<Scalar>::Matrix::Constant(1, 1, a.value().sum());
  return a.tape().record(Op::Sum, std::move(out), {a.index(), Tape<Scalar>::kNone, Tape<Scalar>::kNone});
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& a) {
  return sum(a) * (Scalar(1) / static_cast<Scalar>(a.value().size()));
}

/// Row-block sums: row s of the result is the sum of rows [offsets[s], offsets[s+1]).
template <typename Scalar>
Var<Scalar> segment_sum(const Var<Scalar>& a, std::vector<Eigen::Index> offsets) {
  if (offsets.size() < 2 || offsets.front() != 0 || offsets.back() != a.rows())
    throw std::invalid_argument("segment_sum: offsets must run from 0 to rows");
  const auto m = static_cast<Eigen::Index>(offsets.size() - 1);
  typename Var<Scalar>::Matrix out(m, a.cols());
  for (Eigen::Index s = 0; s < m; ++s) {
    if (offsets[s + 1] <= offsets[s]) throw std::invalid_argument("segment_sum: empty or unordered segment");
    out.row(s) = a.value().middleRows(offsets[s], offsets[s + 1] - offsets[s]).colwise().sum();
  }
  return a.tape().record(Op::SegmentSum, std::move(out), {a.index(), Tape<Scalar>::kNone, Tape<Scalar>::kNone},
                         std::move(offsets));
}

/// Per-row log-sum-exp with max-centering; n x k -> n x 1.
template <typename Scalar>
Var<Scalar> logsumexp_rows(const Var<Scalar>& a) {
  const auto& x = a.value();
  typename Var<Scalar>::Matrix out(x.rows(), 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const Scalar m = x.row(i).maxCoeff();
    out(i, 0) = m + std::log((x.row(i).array() - m).exp().sum());
  }
  return a.tape().record(Op::LogSumExpRows, std::move(out), {a.index(), Tape<Scalar>::kNone, Tape<Scalar>::kNone});
}

template <typename Scalar>
Var<Scalar> logsumexp(const Var<Scalar>& a) {
  const auto& x = a.value();
  const Scalar m = x.maxCoeff();
  typename Var<Scalar>::Matrix out =
      Var<Scalar>::Matrix::Constant(1, 1, m + std::log((x.array() - m).exp().sum()));
  return a.tape().record(Op::LogSumExp, std::move(out), {a.index(), Tape<Scalar>::kNone, Tape<Scalar>::kNone});
}

}  // namespace ngmm::ad
