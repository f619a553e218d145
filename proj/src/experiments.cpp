#include "ngmm/experiments.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace ngmm {

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t s = Philox::splitmix64(base);
  for (auto t : tags) s = Philox::splitmix64(s ^ Philox::splitmix64(t + 0x9e3779b97f4a7c15ULL));
  return s;
}

std::vector<MethodSpec> parse_methods(const std::vector<std::string>& names, double lambda_irm, double lambda_varex) {
  if (names.empty()) throw std::invalid_argument("at least one method is required");
  std::vector<MethodSpec> out;
  for (const auto& n : names) {
    if (n == "ngmm") {
      out.push_back({n, true, PenaltyConfig::erm()});
      continue;
    }
    switch (parse_method(n)) {
      case PenaltyMethod::ERM: out.push_back({n, false, PenaltyConfig::erm()}); break;
      case PenaltyMethod::IRM: out.push_back({n, false, PenaltyConfig::irm(lambda_irm)}); break;
      case PenaltyMethod::VaREx: out.push_back({n, false, PenaltyConfig::varex(lambda_varex)}); break;
    }
  }
  return out;
}

namespace {

std::string describe_fit(const FitConfig& f) {
  std::ostringstream os;
  os << std::setprecision(17) << "family=" << f.family.name() << ";lr=" << f.learning_rate << ";epochs=" << f.epochs
     << ";envs_per_step=" << f.envs_per_step << ";block=" << f.block_size << ";rule=" << f.rule.describe()
     << ";hidden=";
  for (auto h : f.hidden) os << h << ',';
  os << ";freeze_noise=" << f.freeze_noise << ";init_sigma=" << f.init_sigma << ";init_noise=" << f.init_noise;
  return os.str();
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

FitResult fit_method(const MethodSpec& m, const EnvDataset& data, FitConfig cfg) {
  if (m.random_intercept) return fit_ngmm(data, cfg);
  return fit_baseline(data, cfg, m.penalty);
}

double nan() { return std::numeric_limits<double>::quiet_NaN(); }

}  // namespace

// ---- tradeoff ----

FitConfig TradeoffOptions::default_ngmm_fit() {
  FitConfig f;
  f.family = ResponseFamily::gaussian();
  f.rule = MarginalRule::gaussian_closed_form();
  f.learning_rate = 1e-2;
  f.epochs = 20;
  f.block_size = 0;
  f.envs_per_step = 1;
  return f;
}

FitConfig TradeoffOptions::default_baseline_fit() {
  FitConfig f = default_ngmm_fit();
  f.block_size = 100;
  f.envs_per_step = 5;
  return f;
}

std::string TradeoffOptions::canonical() const {
  std::ostringstream os;
  os << std::setprecision(17) << "tradeoff;sigma_e=" << scales.sigma_e << ";sigma_c=" << scales.sigma_c
     << ";sigma_u=" << scales.sigma_u << ";sigma_eps=" << scales.sigma_eps << ";regimes=";
  for (auto r : regimes) os << regime_name(r) << ',';
  os << ";alphas=" << join(alphas) << ";train_envs=" << n_train_envs << ";test_envs=" << n_test_envs
     << ";n_per_env=" << n_per_env << ";reps=" << reps << ";methods=" << join(methods) << ";lambda_irm=" << lambda_irm
     << ";lambda_varex=" << lambda_varex << ";ngmm{" << describe_fit(ngmm_fit) << "};baseline{"
     << describe_fit(baseline_fit) << "};seed=" << seed;
  return os.str();
}

std::vector<TradeoffRow> run_tradeoff(const TradeoffOptions& options, std::ostream* log) {
  if (options.reps < 1) throw std::invalid_argument("tradeoff: repetitions must be >= 1");
  const auto methods = parse_methods(options.methods, options.lambda_irm, options.lambda_varex);
  std::vector<TradeoffRow> rows;
  for (Regime regime : options.regimes) {
    for (std::size_t ai = 0; ai < options.alphas.size(); ++ai) {
      const double alpha = options.alphas[ai];
      for (int rep = 0; rep < options.reps; ++rep) {
        const std::uint64_t r = static_cast<std::uint64_t>(regime), a = ai, p = static_cast<std::uint64_t>(rep);
        SimConfig train_cfg = options.scales;
        train_cfg.alpha = alpha;
        train_cfg.regime = regime;
        train_cfg.n_envs = options.n_train_envs;
        train_cfg.n_per_env = options.n_per_env;
        train_cfg.first_env_id = 0;
        train_cfg.seed = derive_seed(options.seed, {1, r, a, p});
        SimConfig test_cfg = train_cfg;
        test_cfg.n_envs = options.n_test_envs;
        test_cfg.first_env_id = options.n_train_envs;
        test_cfg.seed = derive_seed(options.seed, {2, r, a, p});
        const TradeoffData train = gen_tradeoff(train_cfg);
        const TradeoffData test = gen_tradeoff(test_cfg);
        const std::uint64_t fit_seed = derive_seed(options.seed, {3, r, a, p});

        for (const auto& m : methods) {
          TradeoffRow row{regime, alpha, m.name, rep, nan(), nan(), nan(), "ok"};
          FitConfig cfg = m.random_intercept ? options.ngmm_fit : options.baseline_fit;
          cfg.family = ResponseFamily::gaussian();
          cfg.seed = fit_seed;
          try {
            const FitResult fit = fit_method(m, train.data, cfg);
            const auto est = estimate_env_avg_risk(model_predictor(fit.params, cfg.rule), test, train_cfg);
            row.env_avg_risk = est.mean;
            row.std_error = est.std_error;
            if (m.random_intercept) row.sigma_hat = fit.params.sigma();
          } catch (const FitError& e) {
            row.status = "diverged";
            if (log) *log << "  " << m.name << " diverged at epoch " << e.epoch() << ": " << e.what() << '\n';
          }
          rows.push_back(row);
        }
        rows.push_back({regime, alpha, "bayes", rep, bayes_risk(train_cfg), 0.0, nan(), "ok"});
        if (log) {
          *log << regime_name(regime) << " alpha=" << alpha << " rep=" << rep << ':';
          for (std::size_t k = rows.size() - methods.size() - 1; k < rows.size(); ++k)
            *log << ' ' << rows[k].method << '=' << std::setprecision(4) << rows[k].env_avg_risk;
          *log << '\n';
        }
      }
    }
  }
  return rows;
}

void write_tradeoff_csv(const std::vector<TradeoffRow>& rows, const Provenance& prov, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "regime,alpha,method,rep,env_avg_risk,stderr,sigma_hat,status,seed,config_hash,version\n";
  out << std::setprecision(10);
  for (const auto& r : rows)
    out << regime_name(r.regime) << ',' << r.alpha << ',' << r.method << ',' << r.rep << ',' << r.env_avg_risk << ','
        << r.std_error << ',' << r.sigma_hat << ',' << r.status << ',' << prov.seed << ',' << prov.config_hash << ','
        << prov.version << '\n';
}

// ---- colored ----

FitConfig ColoredOptions::default_ngmm_fit() {
  FitConfig f;
  f.family = ResponseFamily::bernoulli();
  f.rule = MarginalRule::truncated_grid(10.0, 32);
  f.learning_rate = 1e-3;
  f.epochs = 10;
  f.block_size = 64;
  f.envs_per_step = 3;
  return f;
}

FitConfig ColoredOptions::default_baseline_fit() {
  FitConfig f = default_ngmm_fit();
  f.rule = MarginalRule::gauss_hermite(32);
  return f;
}

std::string ColoredOptions::canonical() const {
  std::ostringstream os;
  os << std::setprecision(17) << "colored;a=" << base.a << ";b=" << base.b << ";n_per_env=" << base.n_per_env
     << ";mode=" << (base.mode == ColoredMode::TabularSurrogate ? "surrogate" : "idx") << ";signal=" << base.signal
     << ";noise=" << base.noise << ";idx_images=" << base.idx_images << ";idx_labels=" << base.idx_labels
     << ";train_r=" << join(train_r) << ";test_r=" << join(test_r) << ";n_test=" << n_test_per_env
     << ";reps=" << reps << ";methods=" << join(methods) << ";lambda_irm=" << lambda_irm
     << ";lambda_varex=" << lambda_varex << ";ngmm{" << describe_fit(ngmm_fit) << "};baseline{"
     << describe_fit(baseline_fit) << "};seed=" << seed;
  return os.str();
}

std::vector<ColoredRow> run_colored(const ColoredOptions& options, std::ostream* log) {
  if (options.reps < 1) throw std::invalid_argument("colored: repetitions must be >= 1");
  const auto methods = parse_methods(options.methods, options.lambda_irm, options.lambda_varex);
  for (double r : options.train_r) {
    ColoredConfig c = options.base;
    c.r = r;
    c.validate();
  }
  std::vector<ColoredRow> rows;
  for (int rep = 0; rep < options.reps; ++rep) {
    const auto p = static_cast<std::uint64_t>(rep);
    ColoredConfig train_cfg = options.base;
    train_cfg.seed = derive_seed(options.seed, {11, p});
    train_cfg.env_id = 0;
    ColoredConfig test_cfg = options.base;
    test_cfg.n_per_env = options.n_test_per_env;
    test_cfg.seed = derive_seed(options.seed, {12, p});
    test_cfg.env_id = 100;
    const EnvDataset train = gen_colored(train_cfg, options.train_r);
    const EnvDataset test = gen_colored(test_cfg, options.test_r);
    const std::uint64_t fit_seed = derive_seed(options.seed, {13, p});

    for (const auto& m : methods) {
      FitConfig cfg = m.random_intercept ? options.ngmm_fit : options.baseline_fit;
      cfg.family = ResponseFamily::bernoulli();
      cfg.seed = fit_seed;
      std::optional<FitResult> fit;
      std::string status = "ok";
      try {
        fit = fit_method(m, train, cfg);
      } catch (const FitError& e) {
        status = "diverged";
        if (log) *log << "  " << m.name << " diverged at epoch " << e.epoch() << ": " << e.what() << '\n';
      }
      for (std::size_t k = 0; k < test.envs.size(); ++k) {
        ColoredConfig env_cfg = test_cfg;
        env_cfg.r = options.test_r[k];
        ColoredRow row{options.test_r[k], m.name, rep, bayes_accuracy_colored(env_cfg), nan(), nan(), nan(),
                       nan(), nan(), nan(), status};
        if (fit) {
          const auto& block = test.envs[k].block;
          const auto pred = predict(fit->params, block.features, cfg.rule);
          Eigen::VectorXd p1(block.size());
          for (Eigen::Index i = 0; i < block.size(); ++i) p1(i) = pred[i].mean;
          const BinaryMetrics bm = eval_binary(p1, block.responses);
          row.accuracy = bm.accuracy;
          row.accuracy_se = bm.accuracy_se;
          row.accuracy_gap = row.bayes_accuracy - bm.accuracy;
          row.nll = bm.nll;
          row.brier = bm.brier;
          row.ece = bm.ece;
        }
        rows.push_back(row);
      }
      if (log) {
        *log << "colored rep=" << rep << ' ' << m.name << ':';
        for (std::size_t k = rows.size() - test.envs.size(); k < rows.size(); ++k)
          *log << " r=" << rows[k].test_r << " gap=" << std::setprecision(4) << rows[k].accuracy_gap;
        *log << '\n';
      }
    }
  }
  return rows;
}

void write_colored_csv(const std::vector<ColoredRow>& rows, const Provenance& prov, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "test_env_r,method,rep,bayes_accuracy,accuracy,accuracy_gap,accuracy_se,nll,brier,ece,status,seed,"
         "config_hash,version\n";
  out << std::setprecision(10);
  for (const auto& r : rows)
    out << r.test_r << ',' << r.method << ',' << r.rep << ',' << r.bayes_accuracy << ',' << r.accuracy << ','
        << r.accuracy_gap << ',' << r.accuracy_se << ',' << r.nll << ',' << r.brier << ',' << r.ece << ','
        << r.status << ',' << prov.seed << ',' << prov.config_hash << ',' << prov.version << '\n';
}

// ---- identities ----

IdentitiesReport run_identities(const IdentitiesOptions& options) {
  if (options.n_joints < 1) throw std::invalid_argument("identities: need at least one joint");
  const auto t0 = std::chrono::steady_clock::now();
  IdentitiesReport report;
  report.results = {{"lemma1", 0, 0, true},     {"prop2", 0, 0, true},         {"cor1", 0, 0, true},
                    {"chain_rule", 0, 0, true}, {"delta", 0, 0, true},         {"lemma1_constancy", 0, 0, true},
                    {"eps_robust", 0, 0, true}, {"minimal_invariant", 0, 0, true}};
  auto record = [&](std::size_t k, double dev, const DiscreteJoint& joint) {
    auto& r = report.results[k];
    ++r.checks;
    if (!(dev <= r.max_deviation)) r.max_deviation = std::isnan(dev) ? std::numeric_limits<double>::infinity() : dev;
    if (!(dev <= options.tolerance) && r.passed) {
      r.passed = false;
      if (!report.offending) {
        report.offending = joint;
        report.offending_identity = r.name;
      }
    }
  };

  const Philox root(options.seed);
  for (int j = 0; j < options.n_joints; ++j) {
    Philox rng = root.split(static_cast<std::uint64_t>(j));
    const int ne = 2 + static_cast<int>(rng.below(3));
    const int nx = 2 + static_cast<int>(rng.below(5));
    const int ny = 2 + static_cast<int>(rng.below(2));
    const DiscreteJoint joint = DiscreteJoint::random(rng, ne, nx, ny, options.zero_fraction);

    Representation f(nx);
    for (auto& z : f) z = static_cast<int>(rng.below(static_cast<std::uint64_t>(nx)));
    const PredictorTable q = random_predictor(rng, nx, ny);
    const PredictorTable qf = random_predictor_through(rng, f, ny);

    record(0, risk_report(joint, q).lemma1_deviation(), joint);
    record(1, risk_report(joint, qf, f).decomposition_deviation(), joint);
    record(2, excess_risk_deviation(joint, q), joint);
    record(3, std::max(mi_terms(joint, f).chain_deviation(), mi_terms(joint, identity_representation(nx)).chain_deviation()),
           joint);
    Representation g(nx);
    for (auto& z : g) z = static_cast<int>(rng.below(static_cast<std::uint64_t>(nx)));
    record(4, mi_tradeoff(joint, f, g).delta_deviation, joint);

    // R-bar(q) - R(q) should not depend on q; epsilon gaps measured either way must agree.
    std::vector<PredictorTable> family;
    for (int k = 0; k < 8; ++k) family.push_back(random_predictor(rng, nx, ny));
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    double best_bar = lo, best = lo;
    std::vector<RiskReport> reps;
    for (const auto& cand : family) {
      reps.push_back(risk_report(joint, cand));
      const double gap = reps.back().env_avg_risk - reps.back().marginal_risk;
      lo = std::min(lo, gap);
      hi = std::max(hi, gap);
      best_bar = std::min(best_bar, reps.back().env_avg_risk);
      best = std::min(best, reps.back().marginal_risk);
    }
    record(5, hi - lo, joint);
    double eps_dev = 0.0;
    for (const auto& r : reps)
      eps_dev = std::max(eps_dev, std::abs((r.env_avg_risk - best_bar) - (r.marginal_risk - best)));
    record(6, eps_dev, joint);

    if (j % 10 == 0) {
      const int nc = 2 + static_cast<int>(rng.below(2));
      const DiscreteJoint inv = invariant_model_joint(rng, ne, nc, 2, ny);
      const MinimalSearch found = minimal_representation(inv);
      const double dev = found.found ? mi_terms(inv, found.minimal).y_e_given_f
                                     : std::numeric_limits<double>::infinity();
      record(7, dev, inv);
    }
  }
  for (const auto& r : report.results) report.all_passed = report.all_passed && r.passed;
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

void print_identities(const IdentitiesReport& report, std::ostream& out) {
  out << std::left << std::setw(20) << "identity" << std::setw(10) << "checks" << std::setw(16) << "max_deviation"
      << "status\n";
  for (const auto& r : report.results)
    out << std::left << std::setw(20) << r.name << std::setw(10) << r.checks << std::setw(16) << std::setprecision(3)
        << std::scientific << r.max_deviation << std::defaultfloat << (r.passed ? "pass" : "FAIL") << '\n';
}

}  // namespace ngmm
