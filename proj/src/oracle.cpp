#include "ngmm/oracle.hpp"

#include "ngmm/quadrature.hpp"

#include <cmath>
#include <limits>
#include <tuple>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace ngmm {

double posterior_variance(const SimConfig& config) {
  config.validate();
  const double a = config.alpha;
  return 1.0 / (1.0 / (config.sigma_e * config.sigma_e) + 1.0 / (config.sigma_c * config.sigma_c) +
                a * a / (config.sigma_u * config.sigma_u));
}

double posterior_mean(const SimConfig& config, double c, double s) {
  const double v = posterior_variance(config);
  return v * (c / (config.sigma_c * config.sigma_c) + config.alpha * s / (config.sigma_u * config.sigma_u));
}

GaussianMoments bayes_predictive(const SimConfig& config, double c, double s) {
  const double k = config.env_coefficient(c);
  return {c + k * posterior_mean(config, c, s),
          config.sigma_eps * config.sigma_eps + k * k * posterior_variance(config)};
}

double bayes_risk_wellspec(const SimConfig& config) {
  if (config.regime != Regime::WellSpecified) throw std::invalid_argument("bayes_risk_wellspec: regime mismatch");
  const double a = config.alpha;
  return 0.5 * std::log1p(a * a * posterior_variance(config) / (config.sigma_eps * config.sigma_eps));
}

double bayes_risk_misspec(const SimConfig& config) {
  if (config.regime != Regime::Misspecified) throw std::invalid_argument("bayes_risk_misspec: regime mismatch");
  static const auto gh = gauss_hermite<double>(128);
  const double v = posterior_variance(config);
  const double sd_c = std::sqrt(config.sigma_e * config.sigma_e + config.sigma_c * config.sigma_c);
  const double inv_noise2 = 1.0 / (config.sigma_eps * config.sigma_eps);
  double total = 0.0;
  for (Eigen::Index i = 0; i < gh.nodes.size(); ++i) {
    const double c = std::numbers::sqrt2 * sd_c * gh.nodes(i);
    const double k = config.alpha + (1.0 - config.alpha) * c;
    total += gh.weights(i) * std::log1p(k * k * v * inv_noise2);
  }
  return 0.5 * total / std::sqrt(std::numbers::pi);
}

double bayes_risk(const SimConfig& config) {
  return config.regime == Regime::WellSpecified ? bayes_risk_wellspec(config) : bayes_risk_misspec(config);
}

MonteCarloEstimate mc_bayes_risk(const SimConfig& config, std::size_t draws, std::uint64_t seed) {
  config.validate();
  if (draws < 2) throw std::invalid_argument("mc_bayes_risk: need at least 2 draws");
  static const auto gh = gauss_hermite<double>(64);
  Eigen::VectorXd prior_e = std::numbers::sqrt2 * config.sigma_e * gh.nodes;
  Eigen::VectorXd log_w = gh.log_weights;
  Philox rng = Philox(seed).split(0x6d63ULL);
  const double s2_eps = config.sigma_eps * config.sigma_eps;
  double sum = 0.0, sum_sq = 0.0;
  Eigen::VectorXd lp(prior_e.size());
  for (std::size_t t = 0; t < draws; ++t) {
    const double e = config.sigma_e * rng.normal();
    const double c = e + config.sigma_c * rng.normal();
    const double s = config.alpha * e + config.sigma_u * rng.normal();
    for (Eigen::Index k = 0; k < prior_e.size(); ++k) {
      const double dc = (c - prior_e(k)) / config.sigma_c;
      const double ds = (s - config.alpha * prior_e(k)) / config.sigma_u;
      lp(k) = log_w(k) - 0.5 * (dc * dc + ds * ds);
    }
    const double mx = lp.maxCoeff();
    const Eigen::VectorXd w = (lp.array() - mx).exp();
    const double z = w.sum();
    const double m1 = w.dot(prior_e) / z;
    const double m2 = w.dot(prior_e.cwiseProduct(prior_e)) / z;
    const double k = config.env_coefficient(c);
    const double mean = c + k * m1;
    const double var = s2_eps + k * k * (m2 - m1 * m1);
    const double mu = config.true_mean(c, e);
    const double kl = 0.5 * (std::log(var / s2_eps) + (s2_eps + (mu - mean) * (mu - mean)) / var - 1.0);
    sum += kl;
    sum_sq += kl * kl;
  }
  const double n = static_cast<double>(draws);
  const double mean = sum / n;
  const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
  return {mean, std::sqrt(var / n)};
}

double bayes_accuracy_colored(const ColoredConfig& config) {
  config.validate();
  double acc = 0.0;
  for (int d = 0; d < 2; ++d)
    for (int c = 0; c < 2; ++c) {
      const double pc = c == 1 ? ColoredConfig::color_probability(d) : 1.0 - ColoredConfig::color_probability(d);
      const double py = config.label_probability(d, c);
      acc += 0.5 * pc * std::max(py, 1.0 - py);
    }
  return acc;
}

// ---- discrete joints ----

DiscreteJoint::DiscreteJoint(int n_e, int n_x, int n_y)
    : DiscreteJoint(n_e, n_x, n_y, std::vector<double>(static_cast<std::size_t>(n_e) * n_x * n_y, 0.0)) {}

DiscreteJoint::DiscreteJoint(int n_e, int n_x, int n_y, std::vector<double> table)
    : n_e_(n_e), n_x_(n_x), n_y_(n_y), p_(std::move(table)) {
  if (n_e < 1 || n_x < 1 || n_y < 2) throw std::invalid_argument("joint supports need |E|,|X| >= 1 and |Y| >= 2");
  if (p_.size() != static_cast<std::size_t>(n_e) * n_x * n_y)
    throw std::invalid_argument("joint table size does not match supports");
}

void DiscreteJoint::validate() const {
  double total = 0.0;
  for (double v : p_) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("joint probabilities must be finite and >= 0");
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-12) throw std::invalid_argument("joint probabilities do not sum to 1");
}

double DiscreteJoint::p_ex(int e, int x) const {
  double s = 0.0;
  for (int y = 0; y < n_y_; ++y) s += (*this)(e, x, y);
  return s;
}

double DiscreteJoint::p_xy(int x, int y) const {
  double s = 0.0;
  for (int e = 0; e < n_e_; ++e) s += (*this)(e, x, y);
  return s;
}

double DiscreteJoint::p_x(int x) const {
  double s = 0.0;
  for (int y = 0; y < n_y_; ++y) s += p_xy(x, y);
  return s;
}

DiscreteJoint DiscreteJoint::random(Philox& rng, int n_e, int n_x, int n_y, double zero_fraction) {
  DiscreteJoint j(n_e, n_x, n_y);
  double total = 0.0;
  for (auto& v : j.p_) {
    v = -std::log(rng.uniform_open());
    total += v;
  }
  // Zero whole (e, x) cells so the measure-zero path is exercised.
  if (zero_fraction > 0.0) {
    for (int e = 0; e < n_e; ++e)
      for (int x = 0; x < n_x; ++x)
        if (rng.uniform() < zero_fraction)
          for (int y = 0; y < n_y; ++y) {
            total -= j(e, x, y);
            j(e, x, y) = 0.0;
          }
  }
  if (!(total > 0.0)) {
    j(0, 0, 0) = 1.0;
    total = 1.0;
  }
  for (auto& v : j.p_) v /= total;
  return j;
}

void write_joint_csv(const DiscreteJoint& joint, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "e,x,y,p\n";
  out.precision(17);
  for (int e = 0; e < joint.n_e(); ++e)
    for (int x = 0; x < joint.n_x(); ++x)
      for (int y = 0; y < joint.n_y(); ++y) out << e << ',' << x << ',' << y << ',' << joint(e, x, y) << '\n';
}

DiscreteJoint read_joint_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line != "e,x,y,p") throw std::runtime_error("'" + path + "': header must be e,x,y,p");
  std::map<std::tuple<int, int, int>, double> cells;
  int ne = 0, nx = 0, ny = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a, b, c, d;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c, ',') || !std::getline(ss, d))
      throw std::runtime_error("'" + path + "' line " + std::to_string(line_no) + ": expected 4 columns");
    const int e = std::stoi(a), x = std::stoi(b), y = std::stoi(c);
    if (e < 0 || x < 0 || y < 0) throw std::runtime_error("'" + path + "' line " + std::to_string(line_no) + ": negative index");
    cells[{e, x, y}] = std::stod(d);
    ne = std::max(ne, e + 1);
    nx = std::max(nx, x + 1);
    ny = std::max(ny, y + 1);
  }
  DiscreteJoint joint(ne, nx, ny);
  for (const auto& [k, v] : cells) joint(std::get<0>(k), std::get<1>(k), std::get<2>(k)) = v;
  joint.validate();
  return joint;
}

Representation identity_representation(int n_x) {
  Representation f(n_x);
  for (int x = 0; x < n_x; ++x) f[x] = x;
  return f;
}

void validate_predictor(const PredictorTable& q, const DiscreteJoint& joint) {
  if (q.rows() != joint.n_x() || q.cols() != joint.n_y())
    throw std::invalid_argument("predictor table must be |X| x |Y|");
  for (Eigen::Index x = 0; x < q.rows(); ++x) {
    if (!q.row(x).allFinite() || (q.row(x).array() < 0.0).any())
      throw std::invalid_argument("predictor rows must be finite and non-negative");
    if (std::abs(q.row(x).sum() - 1.0) > 1e-12)
      throw std::invalid_argument("predictor row " + std::to_string(x) + " does not sum to 1");
  }
}

PredictorTable random_predictor(Philox& rng, int n_x, int n_y) {
  PredictorTable q(n_x, n_y);
  for (int x = 0; x < n_x; ++x) {
    for (int y = 0; y < n_y; ++y) q(x, y) = -std::log(rng.uniform_open());
    q.row(x) /= q.row(x).sum();
  }
  return q;
}

PredictorTable random_predictor_through(Philox& rng, const Representation& f, int n_y) {
  int n_z = 0;
  for (int z : f) n_z = std::max(n_z, z + 1);
  const PredictorTable qz = random_predictor(rng, n_z, n_y);
  PredictorTable q(static_cast<Eigen::Index>(f.size()), n_y);
  for (std::size_t x = 0; x < f.size(); ++x) q.row(x) = qz.row(f[x]);
  return q;
}

PredictorTable marginal_conditional(const DiscreteJoint& joint) {
  PredictorTable q(joint.n_x(), joint.n_y());
  for (int x = 0; x < joint.n_x(); ++x) {
    const double px = joint.p_x(x);
    for (int y = 0; y < joint.n_y(); ++y) q(x, y) = px > 0.0 ? joint.p_xy(x, y) / px : 1.0 / joint.n_y();
  }
  return q;
}

namespace {

/// sum_y p log(p / q) for already-normalized rows; p = 0 terms vanish.
template <typename P, typename Q>
double kl(const P& p, const Q& q) {
  double s = 0.0;
  for (Eigen::Index y = 0; y < p.size(); ++y) {
    if (p(y) <= 0.0) continue;
    if (q(y) <= 0.0) return std::numeric_limits<double>::infinity();
    s += p(y) * std::log(p(y) / q(y));
  }
  return s;
}

int num_labels(const Representation& f) {
  int n = 0;
  for (int z : f) {
    if (z < 0) throw std::invalid_argument("representation labels must be non-negative");
    n = std::max(n, z + 1);
  }
  return n;
}

/// Conditional tables of the joint, all with zero-mass cells left empty (mass 0).
struct Conditionals {
  Eigen::MatrixXd p_ex;        // E x X
  Eigen::VectorXd p_x;         // X
  Eigen::MatrixXd y_given_ex;  // (E*X) x Y
  Eigen::MatrixXd y_given_x;   // X x Y
  Eigen::MatrixXd p_ez;        // E x Z
  Eigen::VectorXd p_z;         // Z
  Eigen::MatrixXd y_given_ez;  // (E*Z) x Y
  Eigen::MatrixXd y_given_z;   // Z x Y
};

Conditionals conditionals(const DiscreteJoint& j, const Representation& f) {
  if (static_cast<int>(f.size()) != j.n_x()) throw std::invalid_argument("representation must be defined on all of X");
  const int E = j.n_e(), X = j.n_x(), Y = j.n_y(), Z = num_labels(f);
  Conditionals c{Eigen::MatrixXd::Zero(E, X), Eigen::VectorXd::Zero(X), Eigen::MatrixXd::Zero(E * X, Y),
                 Eigen::MatrixXd::Zero(X, Y), Eigen::MatrixXd::Zero(E, Z), Eigen::VectorXd::Zero(Z),
                 Eigen::MatrixXd::Zero(E * Z, Y), Eigen::MatrixXd::Zero(Z, Y)};
  for (int e = 0; e < E; ++e)
    for (int x = 0; x < X; ++x)
      for (int y = 0; y < Y; ++y) {
        const double v = j(e, x, y);
        c.y_given_ex(e * X + x, y) += v;
        c.y_given_x(x, y) += v;
        c.y_given_ez(e * Z + f[x], y) += v;
        c.y_given_z(f[x], y) += v;
      }
  auto normalize = [](Eigen::MatrixXd& rows, auto&& mass_out) {
    for (Eigen::Index r = 0; r < rows.rows(); ++r) {
      const double m = rows.row(r).sum();
      mass_out(r, m);
      if (m > 0.0) rows.row(r) /= m;
    }
  };
  normalize(c.y_given_ex, [&](Eigen::Index r, double m) { c.p_ex(r / X, r % X) = m; });
  normalize(c.y_given_x, [&](Eigen::Index r, double m) { c.p_x(r) = m; });
  normalize(c.y_given_ez, [&](Eigen::Index r, double m) { c.p_ez(r / Z, r % Z) = m; });
  normalize(c.y_given_z, [&](Eigen::Index r, double m) { c.p_z(r) = m; });
  return c;
}

}  // namespace

RiskReport risk_report(const DiscreteJoint& joint, const PredictorTable& q, const Representation& f) {
  joint.validate();
  validate_predictor(q, joint);
  const Conditionals c = conditionals(joint, f);
  const int E = joint.n_e(), X = joint.n_x(), Z = num_labels(f);
  RiskReport r;
  for (int e = 0; e < E; ++e)
    for (int x = 0; x < X; ++x) {
      const double w = c.p_ex(e, x);
      if (w <= 0.0) {
        ++r.skipped_cells;
        continue;
      }
      r.env_avg_risk += w * kl(c.y_given_ex.row(e * X + x), q.row(x));
      r.irreducible += w * kl(c.y_given_ex.row(e * X + x), c.y_given_x.row(x));
    }
  // q(y | z) as the p(x)-weighted average of q(y | x) over each level set.
  Eigen::MatrixXd qz = Eigen::MatrixXd::Zero(Z, joint.n_y());
  for (int x = 0; x < X; ++x) {
    const double w = c.p_x(x);
    if (w <= 0.0) {
      ++r.skipped_cells;
      continue;
    }
    r.marginal_risk += w * kl(c.y_given_x.row(x), q.row(x));
    r.representation_term += w * kl(c.y_given_x.row(x), c.y_given_z.row(f[x]));
    qz.row(f[x]) += w * q.row(x);
  }
  for (int z = 0; z < Z; ++z) {
    if (c.p_z(z) <= 0.0) continue;
    qz.row(z) /= c.p_z(z);
    r.predictor_term += c.p_z(z) * kl(c.y_given_z.row(z), qz.row(z));
  }
  for (int x = 0; x < X; ++x)
    if (c.p_x(x) > 0.0 && (q.row(x) - qz.row(f[x])).cwiseAbs().maxCoeff() > 1e-14) r.factors_through_f = false;
  return r;
}

RiskReport risk_report(const DiscreteJoint& joint, const PredictorTable& q) {
  return risk_report(joint, q, identity_representation(joint.n_x()));
}

MiTerms mi_terms(const DiscreteJoint& joint, const Representation& f) {
  joint.validate();
  const Conditionals c = conditionals(joint, f);
  const int E = joint.n_e(), X = joint.n_x(), Z = num_labels(f);
  MiTerms t;
  for (int x = 0; x < X; ++x)
    if (c.p_x(x) > 0.0) t.y_x_given_f += c.p_x(x) * kl(c.y_given_x.row(x), c.y_given_z.row(f[x]));
  for (int e = 0; e < E; ++e) {
    for (int z = 0; z < Z; ++z)
      if (c.p_ez(e, z) > 0.0) t.y_e_given_f += c.p_ez(e, z) * kl(c.y_given_ez.row(e * Z + z), c.y_given_z.row(z));
    for (int x = 0; x < X; ++x) {
      const double w = c.p_ex(e, x);
      if (w <= 0.0) continue;
      t.y_x_given_ef += w * kl(c.y_given_ex.row(e * X + x), c.y_given_ez.row(e * Z + f[x]));
      t.y_e_given_x += w * kl(c.y_given_ex.row(e * X + x), c.y_given_x.row(x));
    }
  }
  return t;
}

MiTradeoff mi_tradeoff(const DiscreteJoint& joint, const Representation& f_ind, const Representation& f_ri) {
  MiTradeoff out{mi_terms(joint, f_ind), mi_terms(joint, f_ri), 0.0, 0.0};
  out.delta = (out.ind.y_x_given_ef - out.ri.y_x_given_ef) - (out.ri.y_e_given_f - out.ind.y_e_given_f);
  out.delta_deviation = std::abs(out.delta - (out.ind.y_x_given_f - out.ri.y_x_given_f));
  return out;
}

double excess_risk_deviation(const DiscreteJoint& joint, const PredictorTable& q) {
  const RiskReport theta = risk_report(joint, q);
  const RiskReport best = risk_report(joint, marginal_conditional(joint));
  return std::abs((theta.env_avg_risk - best.env_avg_risk) - theta.marginal_risk);
}

bool check_excess_risk(const DiscreteJoint& joint, const PredictorTable& q, double tol) {
  return excess_risk_deviation(joint, q) <= tol;
}

std::vector<Representation> enumerate_partitions(int n) {
  if (n < 1 || n > 10) throw std::invalid_argument("enumerate_partitions: n must be in [1, 10]");
  std::vector<Representation> out;
  Representation a(n, 0);
  // Restricted growth strings: a[0] = 0, a[i] <= 1 + max(a[0..i-1]).
  auto rec = [&](auto&& self, int i, int mx) -> void {
    if (i == n) {
      out.push_back(a);
      return;
    }
    for (int v = 0; v <= mx + 1; ++v) {
      a[i] = v;
      self(self, i + 1, std::max(mx, v));
    }
  };
  a[0] = 0;
  rec(rec, 1, 0);
  return out;
}

bool is_function_of(const Representation& g, const Representation& f) {
  if (g.size() != f.size()) throw std::invalid_argument("representations defined on different supports");
  std::map<int, int> h;
  for (std::size_t x = 0; x < f.size(); ++x) {
    auto [it, inserted] = h.emplace(f[x], g[x]);
    if (!inserted && it->second != g[x]) return false;
  }
  return true;
}

MinimalSearch minimal_representation(const DiscreteJoint& joint, double tol) {
  if (joint.n_x() > 6) throw std::invalid_argument("minimal_representation: exhaustive search limited to |X| <= 6");
  MinimalSearch out;
  for (auto& f : enumerate_partitions(joint.n_x()))
    if (mi_terms(joint, f).y_x_given_f <= tol) out.zero_risk.push_back(f);
  for (const auto& cand : out.zero_risk) {
    bool minimal = true;
    for (const auto& other : out.zero_risk)
      if (!is_function_of(cand, other)) {
        minimal = false;
        break;
      }
    if (minimal) {
      out.minimal = cand;
      out.found = true;
      break;
    }
  }
  return out;
}

DiscreteJoint invariant_model_joint(Philox& rng, int n_e, int n_c, int n_s, int n_y) {
  auto simplex = [&](int k) {
    Eigen::VectorXd v(k);
    for (int i = 0; i < k; ++i) v(i) = -std::log(rng.uniform_open());
    return Eigen::VectorXd(v / v.sum());
  };
  const Eigen::VectorXd pe = simplex(n_e);
  std::vector<Eigen::VectorXd> pc(n_e), ps(n_e), py(n_c);
  for (int e = 0; e < n_e; ++e) {
    pc[e] = simplex(n_c);
    ps[e] = simplex(n_s);
  }
  for (int c = 0; c < n_c; ++c) py[c] = simplex(n_y);
  DiscreteJoint j(n_e, n_c * n_s, n_y);
  for (int e = 0; e < n_e; ++e)
    for (int c = 0; c < n_c; ++c)
      for (int s = 0; s < n_s; ++s)
        for (int y = 0; y < n_y; ++y) j(e, c * n_s + s, y) = pe(e) * pc[e](c) * ps[e](s) * py[c](y);
  // Renormalize away rounding so validate() holds at 1e-12.
  double total = 0.0;
  for (double v : j.table()) total += v;
  for (int e = 0; e < n_e; ++e)
    for (int x = 0; x < n_c * n_s; ++x)
      for (int y = 0; y < n_y; ++y) j(e, x, y) /= total;
  return j;
}

RiskSplit empirical_risk_split(const DiscreteJoint& joint, const PredictorTable& fitted,
                               const std::vector<PredictorTable>& family) {
  if (family.empty()) throw std::invalid_argument("empirical_risk_split: empty predictor family");
  const RiskReport r = risk_report(joint, fitted);
  double best = std::numeric_limits<double>::infinity();
  for (const auto& q : family) best = std::min(best, risk_report(joint, q).marginal_risk);
  return {r.irreducible, best, r.marginal_risk - best};
}

}  // namespace ngmm
