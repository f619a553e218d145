#pragma once

#include "ngmm/baselines.hpp"
#include "ngmm/datagen.hpp"
#include "ngmm/fit.hpp"
#include "ngmm/metrics.hpp"
#include "ngmm/oracle.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace ngmm {

inline constexpr const char* kVersion = "0.1.0";

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& text);
std::string hex64(std::uint64_t v);
/// Independent seed for a tagged sub-task.
std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags);

struct MethodSpec {
  std::string name;
  bool random_intercept = false;
  PenaltyConfig penalty{};
};

/// "ngmm", "erm", "irm", "varex" with the given penalty strengths.
std::vector<MethodSpec> parse_methods(const std::vector<std::string>& names, double lambda_irm, double lambda_varex);

struct Provenance {
  std::uint64_t seed = 0;
  std::string config_hash;
  std::string version = kVersion;
};

// ---- tradeoff simulation ----

struct TradeoffOptions {
  SimConfig scales{};
  std::vector<Regime> regimes{Regime::WellSpecified, Regime::Misspecified};
  std::vector<double> alphas{0.0, 0.25, 0.5, 0.75, 1.0};
  int n_train_envs = 20;
  int n_test_envs = 20;
  int n_per_env = 500;
  int reps = 3;
  std::vector<std::string> methods{"ngmm", "erm", "irm", "varex"};
  double lambda_irm = 0.01;
  double lambda_varex = 0.01;
  FitConfig ngmm_fit = default_ngmm_fit();
  FitConfig baseline_fit = default_baseline_fit();
  std::uint64_t seed = 0;

  static FitConfig default_ngmm_fit();
  static FitConfig default_baseline_fit();
  /// Canonical text of every field, hashed into the provenance tuple.
  std::string canonical() const;
};

struct TradeoffRow {
  Regime regime = Regime::WellSpecified;
  double alpha = 0.0;
  std::string method;
  int rep = 0;
  double env_avg_risk = 0.0;
  double std_error = 0.0;
  /// Fitted sigma for ngmm, NaN otherwise.
  double sigma_hat = 0.0;
  std::string status = "ok";
};

std::vector<TradeoffRow> run_tradeoff(const TradeoffOptions& options, std::ostream* log = nullptr);
void write_tradeoff_csv(const std::vector<TradeoffRow>& rows, const Provenance& prov, const std::string& path);

// ---- colored mechanism ----

struct ColoredOptions {
  ColoredConfig base{};
  std::vector<double> train_r{0.10, 0.15, 0.20};
  std::vector<double> test_r{0.15, -0.10, -0.15, -0.20, 0.0};
  int n_test_per_env = 5000;
  int reps = 5;
  std::vector<std::string> methods{"ngmm", "erm", "irm", "varex"};
  double lambda_irm = 20.0;
  double lambda_varex = 100.0;
  FitConfig ngmm_fit = default_ngmm_fit();
  FitConfig baseline_fit = default_baseline_fit();
  std::uint64_t seed = 0;

  static FitConfig default_ngmm_fit();
  static FitConfig default_baseline_fit();
  std::string canonical() const;
};

struct ColoredRow {
  double test_r = 0.0;
  std::string method;
  int rep = 0;
  double bayes_accuracy = 0.0;
  double accuracy = 0.0;
  double accuracy_gap = 0.0;
  double accuracy_se = 0.0;
  double nll = 0.0;
  double brier = 0.0;
  double ece = 0.0;
  std::string status = "ok";
};

std::vector<ColoredRow> run_colored(const ColoredOptions& options, std::ostream* log = nullptr);
void write_colored_csv(const std::vector<ColoredRow>& rows, const Provenance& prov, const std::string& path);

// ---- identity suite ----

struct IdentitiesOptions {
  int n_joints = 100;
  double tolerance = 1e-10;
  std::uint64_t seed = 0;
  /// Fraction of (e, x) cells zeroed in each random joint.
  double zero_fraction = 0.1;
};

struct IdentityResult {
  std::string name;
  double max_deviation = 0.0;
  std::size_t checks = 0;
  bool passed = true;
};

struct IdentitiesReport {
  std::vector<IdentityResult> results;
  bool all_passed = true;
  std::optional<DiscreteJoint> offending;
  std::string offending_identity;
  double seconds = 0.0;
};

/// Lemma 1, marginal-risk decomposition, excess risk, chain rule, delta,
/// Lemma-1 constancy, epsilon-robustness bookkeeping and the minimal-representation check.
IdentitiesReport run_identities(const IdentitiesOptions& options);
void print_identities(const IdentitiesReport& report, std::ostream& out);

}  // namespace ngmm
