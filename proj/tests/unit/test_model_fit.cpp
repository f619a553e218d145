#include "ngmm/baselines.hpp"
#include "ngmm/fit.hpp"
#include "ngmm/model.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

using namespace ngmm;

namespace {

/// y = x + gamma_e + noise * eps with gamma_e ~ N(0, sigma^2).
EnvDataset linear_ri_data(int n_envs, int n_per_env, double sigma, double noise, std::uint64_t seed) {
  Philox rng(seed);
  EnvDataset data;
  data.feature_names = {"x"};
  for (int e = 0; e < n_envs; ++e) {
    const double g = sigma * rng.normal();
    Environment env{e, {Eigen::MatrixXd(n_per_env, 1), Eigen::VectorXd(n_per_env)}};
    for (int i = 0; i < n_per_env; ++i) {
      const double x = rng.normal();
      env.block.features(i, 0) = x;
      env.block.responses(i) = x + g + noise * rng.normal();
    }
    data.envs.push_back(std::move(env));
  }
  return data;
}

EnvDataset logistic_data(int n_envs, int n_per_env, std::uint64_t seed) {
  Philox rng(seed);
  EnvDataset data;
  for (int e = 0; e < n_envs; ++e) {
    const double g = 0.5 * rng.normal();
    Environment env{e, {Eigen::MatrixXd(n_per_env, 2), Eigen::VectorXd(n_per_env)}};
    for (int i = 0; i < n_per_env; ++i) {
      const double a = rng.normal(), b = rng.normal();
      env.block.features.row(i) << a, b;
      env.block.responses(i) = rng.bernoulli(logistic(1.5 * a - b + g)) ? 1.0 : 0.0;
    }
    data.envs.push_back(std::move(env));
  }
  return data;
}

FitConfig linear_fit(std::uint64_t seed) {
  FitConfig cfg;
  cfg.hidden = {};
  cfg.rule = MarginalRule::gaussian_closed_form();
  cfg.seed = seed;
  return cfg;
}

NgmmParams make_model(const ResponseFamily& family, Eigen::Index d, std::vector<Eigen::Index> hidden, bool ri,
                      std::uint64_t seed = 1) {
  Philox rng(seed);
  InitOptions init;
  init.random_intercept = ri;
  return NgmmParams::initialize(family, {d, std::move(hidden)}, rng, init);
}

}  // namespace

TEST_CASE("parameter layout and initialization") {
  const NgmmParams p = make_model(ResponseFamily::gaussian(), 3, {32, 32}, true);
  CHECK(p.values().segment("layer0.weight").rows() == 3);
  CHECK(p.values().segment("layer1.weight").cols() == 32);
  CHECK(p.values().segment("head.weight").rows() == 32);
  CHECK(p.values().segment("layer0.bias").isZero());
  CHECK(p.values().segment("head.bias").isZero());
  CHECK(p.sigma() == doctest::Approx(1.0));
  CHECK(p.noise() == doctest::Approx(1.0));
  const double limit = std::sqrt(6.0 / 35.0);
  CHECK(p.values().segment("layer0.weight").cwiseAbs().maxCoeff() <= limit);

  const NgmmParams b = make_model(ResponseFamily::bernoulli(), 2, {}, false);
  CHECK_FALSE(b.has_random_intercept());
  CHECK_FALSE(b.values().contains("noise.raw"));
  CHECK(b.noise() == 1.0);
  CHECK_THROWS(b.sigma());
  CHECK(Architecture::parse_hidden("16,8") == std::vector<Eigen::Index>{16, 8});
  CHECK(Architecture::parse_hidden("none").empty());
  CHECK_THROWS(Architecture::parse_hidden("4,-1"));
}

TEST_CASE("tape fixed part agrees with the direct evaluation") {
  const NgmmParams p = make_model(ResponseFamily::gaussian(), 3, {5, 4}, true, 9);
  Philox rng(3);
  Eigen::MatrixXd x(6, 3);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  Tape tape;
  BoundParams bound(tape, p.values());
  const Var u = fixed_part(bound, p.architecture(), tape.constant(x));
  CHECK((u.value() - p.fixed_part(x)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("model log density and conditional mean") {
  NgmmParams p = make_model(ResponseFamily::bernoulli(), 1, {}, true);
  p.values().segment("head.weight")(0, 0) = 2.0;
  Eigen::RowVectorXd x(1);
  x << 1.0;
  CHECK(log_density(p, 1.0, x, -2.0) == doctest::Approx(std::log(0.5)));
  CHECK(conditional_mean(p, x, 0.0) == doctest::Approx(logistic(2.0)));
  CHECK_THROWS(conditional_mean(p, x, INFINITY));
}

TEST_CASE("epoch plans cover every row once and never repeat an environment in a step") {
  const EnvDataset data = linear_ri_data(7, 23, 1.0, 1.0, 4);
  Philox rng(5);
  for (Eigen::Index block : {Eigen::Index{0}, Eigen::Index{5}, Eigen::Index{23}, Eigen::Index{100}})
    for (int per_step : {1, 3, 7}) {
      const auto plans = plan_epoch(data, block, per_step, rng);
      std::vector<std::set<Eigen::Index>> seen(data.num_envs());
      std::size_t blocks = 0;
      for (const auto& plan : plans) {
        CHECK(static_cast<int>(plan.size()) <= per_step);
        std::set<std::size_t> envs;
        for (const auto& ref : plan) {
          CHECK(envs.insert(ref.env).second);
          if (block > 0) CHECK(static_cast<Eigen::Index>(ref.rows.size()) <= block);
          for (auto r : ref.rows) CHECK(seen[ref.env].insert(r).second);
          ++blocks;
        }
      }
      for (const auto& s : seen) CHECK(s.size() == 23);
      const std::size_t chunks = block == 0 ? 1 : (23 + block - 1) / block;
      CHECK(blocks == chunks * data.num_envs());
    }
  const StepBatch all = gather_all(data);
  CHECK(all.offsets.back() == data.total_size());
  CHECK(all.env_ids.size() == data.num_envs());
}

TEST_CASE("one epoch at learning rate zero leaves parameters unchanged") {
  const EnvDataset data = linear_ri_data(5, 10, 0.8, 0.5, 1);
  FitConfig cfg = linear_fit(3);
  cfg.learning_rate = 0.0;
  cfg.epochs = 1;
  const FitResult r = fit_ngmm(data, cfg);
  Philox init = Philox(cfg.seed).split(0x696e6974ULL);
  const NgmmParams start = NgmmParams::initialize(cfg.family, {1, {}}, init, {});
  CHECK(r.params.values().flat() == start.values().flat());
  CHECK(r.steps == 5);
}

TEST_CASE("linear random-intercept parameters are recovered") {
  const EnvDataset data = linear_ri_data(200, 50, 0.8, 0.5, 11);
  const FitResult r = fit_ngmm(data, linear_fit(0));
  CHECK(std::abs(r.params.sigma() - 0.8) < 0.1);
  CHECK(std::abs(r.params.values().segment("head.weight")(0, 0) - 1.0) < 0.05);
  CHECK(std::abs(r.params.noise() - 0.5) < 0.05);
  CHECK(r.loss_trace.back() < r.loss_trace.front());
}

TEST_CASE("identical environments drive the intercept scale to zero") {
  Philox rng(6);
  EnvDataset data;
  Eigen::MatrixXd x(40, 1);
  Eigen::VectorXd y(40);
  for (int i = 0; i < 40; ++i) {
    x(i, 0) = rng.normal();
    y(i) = x(i, 0) + 0.5 * rng.normal();
  }
  for (int e = 0; e < 30; ++e) data.envs.push_back({e, {x, y}});
  FitConfig cfg = linear_fit(2);
  cfg.epochs = 40;
  cfg.learning_rate = 2e-2;
  const FitResult r = fit_ngmm(data, cfg);
  CHECK(r.params.sigma() < 0.05);
}

TEST_CASE("marginal likelihood increases under training with both families") {
  {
    const EnvDataset data = linear_ri_data(10, 30, 1.0, 1.0, 2);
    FitConfig cfg;
    cfg.epochs = 5;
    cfg.hidden = {8};
    const FitResult r = fit_ngmm(data, cfg);
    CHECK(r.loss_trace.back() < r.loss_trace.front());
    CHECK(r.loss_trace.size() == 6);
    CHECK(ngmm_training_loss(r.params, data, cfg.rule) == doctest::Approx(r.loss_trace.back()));
  }
  {
    const EnvDataset data = logistic_data(10, 60, 3);
    FitConfig cfg;
    cfg.family = ResponseFamily::bernoulli();
    cfg.epochs = 5;
    cfg.hidden = {8};
    cfg.block_size = 20;
    cfg.envs_per_step = 2;
    const FitResult r = fit_ngmm(data, cfg);
    CHECK(r.loss_trace.back() < r.loss_trace.front());
  }
}

TEST_CASE("fitted intercept scale ranks with the true intercept variance") {
  std::vector<double> mean_sigma;
  for (double var : {0.0, 1.0, 4.0}) {
    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const EnvDataset data = linear_ri_data(30, 20, std::sqrt(var), 1.0, 100 + seed);
      FitConfig cfg = linear_fit(seed);
      cfg.learning_rate = 5e-2;
      total += fit_ngmm(data, cfg).params.sigma();
    }
    mean_sigma.push_back(total / 5.0);
  }
  CHECK(mean_sigma[0] < mean_sigma[1]);
  CHECK(mean_sigma[1] < mean_sigma[2]);
}

TEST_CASE("frozen noise keeps its initial value") {
  const EnvDataset data = linear_ri_data(6, 20, 0.5, 0.3, 7);
  FitConfig cfg = linear_fit(1);
  cfg.freeze_noise = true;
  cfg.init_noise = 0.7;
  cfg.epochs = 3;
  CHECK(fit_ngmm(data, cfg).params.noise() == doctest::Approx(0.7).epsilon(1e-14));
}

TEST_CASE("fit configuration and data preconditions") {
  const EnvDataset data = linear_ri_data(3, 5, 1.0, 1.0, 1);
  FitConfig cfg = linear_fit(0);
  cfg.epochs = 0;
  CHECK_THROWS(fit_ngmm(data, cfg));
  cfg = linear_fit(0);
  cfg.learning_rate = -1.0;
  CHECK_THROWS(fit_ngmm(data, cfg));
  cfg = linear_fit(0);
  cfg.family = ResponseFamily::bernoulli();
  CHECK_THROWS(fit_ngmm(data, cfg));
  EnvDataset single = data;
  single.envs.resize(1);
  CHECK_THROWS(fit_ngmm(single, linear_fit(0)));
}

TEST_CASE("divergent training reports the epoch and environments") {
  EnvDataset data = linear_ri_data(3, 5, 1.0, 1.0, 1);
  data.envs[1].block.responses(2) = 1e300;
  FitConfig cfg = linear_fit(0);
  try {
    (void)fit_ngmm(data, cfg);
    FAIL("expected FitError");
  } catch (const FitError& e) {
    CHECK(e.epoch() >= 0);
    CHECK_FALSE(e.env_ids().empty());
  }
}

TEST_CASE("prediction examples") {
  NgmmParams b = make_model(ResponseFamily::bernoulli(), 1, {}, true);
  b.values().segment("head.weight")(0, 0) = 1.0;
  Eigen::RowVectorXd x(1);
  x << 0.0;
  CHECK(predict(b, x, MarginalRule::gauss_hermite(32)).p1() == doctest::Approx(0.5).epsilon(1e-14));
  double prev = 0.0;
  for (int k = 0; k <= 200; ++k) {
    x(0) = -5.0 + 0.05 * k;
    const double p1 = predict(b, x, MarginalRule::gauss_hermite(32)).p1();
    CHECK(p1 > prev);
    prev = p1;
  }
  // the closed rule falls back to a quadrature for bernoulli
  x(0) = 1.0;
  CHECK(predict(b, x, MarginalRule::gaussian_closed_form()).p1() ==
        doctest::Approx(predict(b, x, MarginalRule::gauss_hermite(64)).p1()));

  NgmmParams g = make_model(ResponseFamily::gaussian(), 2, {3}, true, 4);
  Eigen::MatrixXd xs(3, 2);
  xs << 0.1, 0.2, -1.0, 2.0, 3.0, 0.0;
  const auto preds = predict(g, xs, MarginalRule::gaussian_closed_form());
  const Eigen::VectorXd u = g.fixed_part(xs);
  for (int i = 0; i < 3; ++i) {
    CHECK(preds[i].mean == doctest::Approx(u(i)));
    CHECK(preds[i].variance == doctest::Approx(g.sigma() * g.sigma() + g.noise() * g.noise()));
  }
}

TEST_CASE("fast classification examples") {
  const auto fam = ResponseFamily::bernoulli();
  CHECK(classify_fast(fam, 0.0) == 1);
  CHECK(classify_fast(fam, -3.0) == 0);
  CHECK(marginal_predictive(fam, -3.0, 5.0, 1.0, MarginalRule::gauss_hermite(64)).p1() < 0.5);
  for (double s : {0.1, 1.0, 10.0}) {
    CHECK(classify_fast(fam, 0.1) == 1);
    CHECK(marginal_predictive(fam, 0.1, s, 1.0, MarginalRule::gauss_hermite(64)).p1() > 0.5);
  }
  CHECK_THROWS(classify_fast(ResponseFamily::gaussian(), 0.0));
  CHECK_THROWS(classify_fast(fam, NAN));
  const NgmmParams g = make_model(ResponseFamily::gaussian(), 1, {}, true);
  CHECK_THROWS(classify_fast(g, Eigen::RowVectorXd::Zero(1)));
}

TEST_CASE("sign rule equals the marginal argmax over random pairs") {
  Philox rng(77);
  const auto fam = ResponseFamily::bernoulli();
  int disagreements = 0;
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform(-10.0, 10.0);
    const double s = 10.0 * (1.0 - rng.uniform());
    const double p1 = marginal_predictive(fam, u, s, 1.0, MarginalRule::gauss_hermite(64)).p1();
    const int argmax = p1 >= 0.5 ? 1 : 0;
    disagreements += argmax != classify_fast(fam, u);
  }
  CHECK(disagreements == 0);
}

// ---- baselines ----

TEST_CASE("erm loss examples") {
  NgmmParams m = make_model(ResponseFamily::bernoulli(), 1, {}, false);
  m.values().segment("head.weight")(0, 0) = 0.0;
  EnvDataset data = logistic_data(2, 10, 1);
  for (auto& e : data.envs) e.block.features.conservativeResize(Eigen::NoChange, 1);
  CHECK(erm_loss(m, data) == doctest::Approx(std::log(2.0)).epsilon(1e-14));

  m.values().segment("head.bias")(0, 0) = 40.0;
  EnvDataset ones = data;
  for (auto& e : ones.envs) e.block.responses.setOnes();
  CHECK(erm_loss(m, ones) < 1e-12);

  NgmmParams g = make_model(ResponseFamily::gaussian(), 1, {}, false);
  EnvDataset twin = linear_ri_data(1, 15, 0.0, 1.0, 2);
  twin.envs.push_back({1, twin.envs[0].block});
  EnvDataset one = twin;
  one.envs.resize(1);
  CHECK(erm_loss(g, twin) == doctest::Approx(erm_loss(g, one)).epsilon(1e-14));
}

TEST_CASE("irm penalty matches finite differences of the dummy-scale risk") {
  for (const auto& family : {ResponseFamily::bernoulli(), ResponseFamily::gaussian()}) {
    NgmmParams m = make_model(family, 2, {}, false, 3);
    m.values().segment("head.weight") << 0.7, -1.2;
    m.values().segment("head.bias")(0, 0) = 0.3;
    EnvBlock block{Eigen::MatrixXd(2, 2), Eigen::VectorXd(2)};
    block.features << 1.0, 0.5, -0.3, 2.0;
    block.responses << 1.0, 0.0;
    if (family.is_gaussian()) block.responses << 0.4, -1.1;
    const Eigen::VectorXd u = m.fixed_part(block.features);
    auto risk = [&](double w) {
      double r = 0.0;
      for (int i = 0; i < 2; ++i) r -= log_density(family, block.responses(i), w * u(i), m.noise());
      return r / 2.0;
    };
    const double h = 1e-5;
    const double d = (risk(1.0 + h) - risk(1.0 - h)) / (2.0 * h);
    CHECK(irm_penalty(m, block) == doctest::Approx(d * d).epsilon(1e-7));

    EnvBlock swapped = block;
    swapped.features.row(0).swap(swapped.features.row(1));
    std::swap(swapped.responses(0), swapped.responses(1));
    CHECK(irm_penalty(m, swapped) == doctest::Approx(irm_penalty(m, block)).epsilon(1e-14));
  }
}

TEST_CASE("irm penalty vanishes at a dummy-stationary predictor") {
  // Gaussian risk with u = y exactly has zero gradient in w at 1
  NgmmParams g = make_model(ResponseFamily::gaussian(), 1, {}, false);
  g.values().segment("head.weight")(0, 0) = 2.0;
  EnvBlock block{Eigen::MatrixXd(3, 1), Eigen::VectorXd(3)};
  block.features << 1.0, -0.5, 2.0;
  block.responses = 2.0 * block.features.col(0);
  CHECK(irm_penalty(g, block) < 1e-24);
}

TEST_CASE("irm dummy gradients are differentiable") {
  NgmmParams m = make_model(ResponseFamily::bernoulli(), 2, {4}, false, 8);
  const EnvDataset data = logistic_data(3, 6, 4);
  const StepBatch batch = gather_all(data);
  auto f = [&](Tape&, const BoundParams& p) {
    return baseline_objective(p, m, batch, PenaltyConfig::irm(3.0));
  };
  CHECK(check_gradient(f, m.values()).passed);
  auto v = [&](Tape&, const BoundParams& p) {
    return baseline_objective(p, m, batch, PenaltyConfig::varex(3.0));
  };
  CHECK(check_gradient(v, m.values()).passed);
}

TEST_CASE("varex penalty examples") {
  CHECK(varex_penalty(Eigen::Vector3d(0.2, 0.2, 0.2)) == doctest::Approx(0.0));
  CHECK(varex_penalty(Eigen::Vector2d(0.0, 1.0)) == doctest::Approx(0.25));
  const Eigen::Vector4d r(0.3, 1.1, -0.4, 2.0);
  CHECK(varex_penalty(r) == doctest::Approx(varex_penalty((r.array() + 7.5).matrix())).epsilon(1e-12));
  CHECK(varex_penalty(Eigen::VectorXd::Constant(1, 3.0)) == 0.0);
}

TEST_CASE("penalty configuration") {
  CHECK(PenaltyConfig::erm().effective_lambda() == 0.0);
  CHECK(PenaltyConfig{PenaltyMethod::ERM, 5.0}.effective_lambda() == 0.0);
  CHECK_THROWS(PenaltyConfig::irm(-1.0).validate());
  CHECK(parse_method("varex") == PenaltyMethod::VaREx);
  CHECK(method_name(PenaltyMethod::IRM) == "irm");
  CHECK_THROWS(parse_method("clove"));
}

TEST_CASE("zero penalty coefficient gives identical trajectories") {
  const EnvDataset data = logistic_data(4, 30, 9);
  FitConfig cfg;
  cfg.family = ResponseFamily::bernoulli();
  cfg.hidden = {6};
  cfg.epochs = 3;
  cfg.block_size = 10;
  cfg.envs_per_step = 2;
  const FitResult erm = fit_baseline(data, cfg, PenaltyConfig::erm());
  const FitResult irm = fit_baseline(data, cfg, PenaltyConfig::irm(0.0));
  const FitResult varex = fit_baseline(data, cfg, PenaltyConfig::varex(0.0));
  CHECK(erm.params.values().flat() == irm.params.values().flat());
  CHECK(erm.params.values().flat() == varex.params.values().flat());
  CHECK_FALSE(erm.params.has_random_intercept());
  const FitResult pen = fit_baseline(data, cfg, PenaltyConfig::irm(10.0));
  CHECK(pen.params.values().flat() != erm.params.values().flat());
}

TEST_CASE("irm with zero penalty reaches the weighted erm optimum on a convex problem") {
  const EnvDataset data = linear_ri_data(4, 25, 0.0, 0.5, 5);
  FitConfig cfg = linear_fit(0);
  cfg.epochs = 3000;
  cfg.envs_per_step = 4;  // full batch
  const FitResult r = fit_baseline(data, cfg, PenaltyConfig::irm(0.0));
  // least squares on the pooled data (equal env sizes so the weightings coincide)
  const Eigen::MatrixXd x = data.stacked_features();
  Eigen::MatrixXd design(x.rows(), 2);
  design << x, Eigen::VectorXd::Ones(x.rows());
  const Eigen::VectorXd coef = design.colPivHouseholderQr().solve(data.stacked_responses());
  CHECK(std::abs(r.params.values().segment("head.weight")(0, 0) - coef(0)) < 1e-3);
  CHECK(std::abs(r.params.values().segment("head.bias")(0, 0) - coef(1)) < 1e-3);
}
