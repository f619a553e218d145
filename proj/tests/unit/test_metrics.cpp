#include "ngmm/datagen.hpp"
#include "ngmm/metrics.hpp"
#include "ngmm/oracle.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace ngmm;

TEST_CASE("constant one-half predictor on balanced labels") {
  Eigen::VectorXd p = Eigen::VectorXd::Constant(10, 0.5), y(10);
  y << 1, 0, 1, 0, 1, 0, 1, 0, 1, 0;
  const BinaryMetrics m = eval_binary(p, y);
  CHECK(m.accuracy == doctest::Approx(0.5));
  CHECK(m.nll == doctest::Approx(std::log(2.0)));
  CHECK(m.brier == doctest::Approx(0.25));
  CHECK(m.ece == doctest::Approx(0.0));
  CHECK_FALSE(m.nll_clamped);
  // sample standard deviation over root n
  CHECK(m.accuracy_se == doctest::Approx(std::sqrt(0.25 * 10.0 / 9.0 / 10.0)));
}

TEST_CASE("ties go to class one") {
  const BinaryMetrics m = eval_binary(Eigen::VectorXd::Constant(4, 0.5), Eigen::VectorXd::Ones(4));
  CHECK(m.accuracy == 1.0);
}

TEST_CASE("perfect confident predictions") {
  Eigen::VectorXd y(6);
  y << 1, 1, 0, 1, 0, 0;
  const BinaryMetrics m = eval_binary(y, y);
  CHECK(m.accuracy == 1.0);
  CHECK(m.nll < 1e-11);
  CHECK(m.brier == 0.0);
  CHECK(m.ece == doctest::Approx(0.0));
}

TEST_CASE("single occupied bin expected calibration error") {
  Eigen::VectorXd p = Eigen::VectorXd::Constant(10, 0.9), y = Eigen::VectorXd::Zero(10);
  y.head(7).setOnes();
  CHECK(eval_binary(p, y).ece == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("confident mistakes are clamped and flagged") {
  Eigen::VectorXd p(2), y(2);
  p << 1.0, 0.0;
  y << 0.0, 0.0;
  const BinaryMetrics m = eval_binary(p, y);
  CHECK(m.nll_clamped);
  CHECK(m.nll == doctest::Approx(-0.5 * std::log(kProbClamp)));
  CHECK_THROWS(eval_binary(Eigen::VectorXd::Constant(2, 1.5), y));
  CHECK_THROWS(eval_binary(p, Eigen::VectorXd::Constant(2, 0.5)));
  CHECK_THROWS(eval_binary(p, Eigen::VectorXd::Zero(3)));
}

TEST_CASE("calibrated predictors have near-zero calibration error") {
  Philox rng(1);
  const Eigen::Index n = 100000;
  Eigen::VectorXd p(n), y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    p(i) = rng.uniform();
    y(i) = rng.bernoulli(p(i)) ? 1.0 : 0.0;
  }
  const BinaryMetrics m = eval_binary(p, y);
  // per bin, |acc - conf| has mean-zero error with sd sqrt(sum p(1-p)) / n_b
  double bound = 0.0;
  for (int b = 0; b < kEceBins; ++b) {
    double var = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int bin = std::min(kEceBins - 1, static_cast<int>(p(i) * kEceBins));
      if (bin == b) var += p(i) * (1.0 - p(i));
    }
    bound += std::sqrt(var) / static_cast<double>(n);
  }
  CHECK(m.ece < 3.0 * bound);
}

TEST_CASE("metric ranges and a Brier bound on random inputs") {
  Philox rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(rng.below(50));
    Eigen::VectorXd p(n), y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      p(i) = rng.uniform();
      y(i) = rng.bernoulli(0.5) ? 1.0 : 0.0;
    }
    const BinaryMetrics m = eval_binary(p, y);
    CHECK(m.accuracy >= 0.0);
    CHECK(m.accuracy <= 1.0);
    CHECK(m.brier >= 0.0);
    CHECK(m.brier <= 1.0);
    CHECK(m.ece >= 0.0);
    CHECK(m.ece <= 1.0);
    CHECK(m.nll >= 0.0);
    CHECK(m.brier <= (p - y).cwiseAbs().mean() + 1e-15);
  }
}

TEST_CASE("Brier score is not bounded by a quarter plus the absolute bias") {
  // bias mean(p - y) is zero, Brier is one
  Eigen::VectorXd p(2), y(2);
  p << 1.0, 0.0;
  y << 0.0, 1.0;
  const BinaryMetrics m = eval_binary(p, y);
  CHECK(m.brier == 1.0);
  CHECK(m.brier > 0.25 + std::abs((p - y).mean()));
}

TEST_CASE("gaussian KL") {
  CHECK(gaussian_kl(0.3, 1.7, 0.3, 1.7) == 0.0);
  CHECK(gaussian_kl(0.0, 1.0, 1.0, 2.0) == doctest::Approx(0.5 * std::log(2.0)));
  CHECK(gaussian_kl(2.0, 0.5, -1.0, 0.5) == doctest::Approx(9.0));
  CHECK_THROWS(gaussian_kl(0.0, 1.0, 0.0, 0.0));
  CHECK_THROWS(gaussian_kl(0.0, -1.0, 0.0, 1.0));
}

TEST_CASE("environment-average risk estimates agree with the oracles") {
  SimConfig gen;
  gen.alpha = 0.75;
  gen.n_per_env = 50;
  const MonteCarloEstimate zero = estimate_env_avg_risk(conditional_oracle_predictor(gen), gen, 20000, 3);
  CHECK(std::abs(zero.mean) < 1e-14);

  const MonteCarloEstimate bayes = estimate_env_avg_risk(bayes_predictor(gen), gen, 40000, 4);
  CHECK(std::abs(bayes.mean - bayes_risk_wellspec(gen)) < 3.0 * bayes.std_error);

  SimConfig mis = gen;
  mis.regime = Regime::Misspecified;
  mis.alpha = 0.25;
  const MonteCarloEstimate m = estimate_env_avg_risk(bayes_predictor(mis), mis, 40000, 5);
  CHECK(std::abs(m.mean - bayes_risk_misspec(mis)) < 3.0 * m.std_error);
  CHECK_THROWS(estimate_env_avg_risk(bayes_predictor(gen), gen, 999, 1));
}

TEST_CASE("no predictor beats the Bayes predictor") {
  SimConfig gen;
  gen.alpha = 0.5;
  gen.n_envs = 200;
  gen.n_per_env = 50;
  gen.seed = 6;
  const TradeoffData test = gen_tradeoff(gen);
  const MonteCarloEstimate bayes = estimate_env_avg_risk(bayes_predictor(gen), test, gen);
  auto shrunk = [&](const Eigen::MatrixXd& x, double) {
    return PredictiveBatch{x.col(0) * 0.9, Eigen::VectorXd::Constant(x.rows(), 1.5)};
  };
  auto overconfident = [&](const Eigen::MatrixXd& x, double) {
    return PredictiveBatch{x.col(0), Eigen::VectorXd::Constant(x.rows(), 0.5)};
  };
  for (const GaussianPredictor& p : {GaussianPredictor(shrunk), GaussianPredictor(overconfident)}) {
    const MonteCarloEstimate r = estimate_env_avg_risk(p, test, gen);
    CHECK(r.mean - bayes.mean >= -3.0 * r.std_error);
  }
  auto broken = [&](const Eigen::MatrixXd& x, double) {
    return PredictiveBatch{x.col(0), Eigen::VectorXd::Zero(x.rows())};
  };
  CHECK_THROWS(estimate_env_avg_risk(GaussianPredictor(broken), test, gen));
}

TEST_CASE("Monte-Carlo standard error shrinks like one over root n") {
  SimConfig gen;
  gen.alpha = 1.0;
  gen.n_per_env = 50;
  auto crude = [](const Eigen::MatrixXd& x, double) {
    return PredictiveBatch{x.col(0), Eigen::VectorXd::Constant(x.rows(), 1.0)};
  };
  const MonteCarloEstimate a = estimate_env_avg_risk(crude, gen, 20000, 7);
  const MonteCarloEstimate b = estimate_env_avg_risk(crude, gen, 40000, 8);
  const double ratio = b.std_error / a.std_error;
  CHECK(std::abs(ratio - 1.0 / std::sqrt(2.0)) < 0.2 / std::sqrt(2.0));
}

TEST_CASE("evaluation CSV layout") {
  std::vector<EvalRow> rows;
  const BinaryMetrics m = eval_binary(Eigen::VectorXd::Constant(4, 0.5), Eigen::VectorXd::Ones(4));
  append_binary_rows(rows, "ngmm", "pooled", m, 9);
  REQUIRE(rows.size() == 5);
  CHECK(rows[3].metric == "ece");
  CHECK(rows[4].metric == "n");
  const auto path = (std::filesystem::temp_directory_path() / "ngmm_eval.csv").string();
  write_eval_csv(rows, path);
  std::ifstream in(path);
  std::string header, first;
  std::getline(in, header);
  std::getline(in, first);
  CHECK(header == "method,env_id,metric,value,stderr,seed");
  CHECK(first.rfind("ngmm,pooled,accuracy,1,", 0) == 0);
}
