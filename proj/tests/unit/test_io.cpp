#include "ngmm/checkpoint.hpp"
#include "ngmm/config.hpp"
#include "ngmm/datagen.hpp"
#include "ngmm/experiments.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace ngmm;

namespace {

std::string tmp(const std::string& name) { return (std::filesystem::temp_directory_path() / name).string(); }

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

TradeoffOptions tiny_tradeoff() {
  TradeoffOptions o;
  o.n_train_envs = 3;
  o.n_test_envs = 3;
  o.n_per_env = 20;
  o.reps = 2;
  o.ngmm_fit.epochs = 2;
  o.baseline_fit.epochs = 2;
  o.ngmm_fit.hidden = {4};
  o.baseline_fit.hidden = {4};
  o.seed = 5;
  return o;
}

}  // namespace

TEST_CASE("checkpoint round trip") {
  Philox rng(3);
  Checkpoint c;
  c.params = NgmmParams::initialize(ResponseFamily::gaussian(), {3, {5, 2}}, rng, {0.6, 0.4, true});
  c.rule = MarginalRule::truncated_grid(3.0, 64);
  c.seed = 1234567890123ULL;
  const std::string path = tmp("ngmm.ckpt");
  save_checkpoint(c, path);
  const Checkpoint back = load_checkpoint(path);
  CHECK(back.params.family() == c.params.family());
  CHECK(back.params.architecture() == c.params.architecture());
  CHECK(back.params.values().flat() == c.params.values().flat());
  CHECK(back.params.values().same_layout(c.params.values()));
  CHECK(back.rule.describe() == c.rule.describe());
  CHECK(back.seed == c.seed);
  CHECK(slurp(path).rfind("ngmm-checkpoint 1\n", 0) == 0);

  Checkpoint plain;
  plain.params = NgmmParams::initialize(ResponseFamily::bernoulli(), {2, {}}, rng, {1.0, 1.0, false});
  save_checkpoint(plain, path);
  CHECK_FALSE(load_checkpoint(path).params.has_random_intercept());

  std::string bytes = slurp(path);
  bytes.resize(bytes.size() - 5);
  std::ofstream(path, std::ios::binary) << bytes;
  CHECK_THROWS(load_checkpoint(path));
  std::ofstream(path) << "something else\n";
  CHECK_THROWS(load_checkpoint(path));
}

TEST_CASE("dataset CSV round trip") {
  SimConfig cfg;
  cfg.n_envs = 3;
  cfg.n_per_env = 4;
  const EnvDataset data = gen_tradeoff(cfg).data;
  const std::string path = tmp("ngmm_data.csv");
  write_dataset_csv(data, path);
  const EnvDataset back = read_dataset_csv(path);
  CHECK(back.feature_names == data.feature_names);
  REQUIRE(back.num_envs() == 3);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(back.envs[j].id == data.envs[j].id);
    CHECK(back.envs[j].block.features == data.envs[j].block.features);
    CHECK(back.envs[j].block.responses == data.envs[j].block.responses);
  }
  std::ofstream(path) << "env_id,x,y\n0,1.0\n";
  CHECK_THROWS(read_dataset_csv(path));
}

TEST_CASE("config text parsing") {
  const auto s = parse_config_text("# comment\nseed = 7\n[ngmm]\nlr = 0.5  # trailing\nrule = \"gh:16\"\n\n");
  REQUIRE(s.size() == 3);
  CHECK(s[0] == Setting{"seed", "7"});
  CHECK(s[1] == Setting{"ngmm.lr", "0.5"});
  CHECK(s[2] == Setting{"ngmm.rule", "gh:16"});
  try {
    (void)parse_config_text("a = 1\nbroken line\n");
    FAIL("expected a parse error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
  CHECK(parse_double_list("0, 0.5,1") == std::vector<double>{0.0, 0.5, 1.0});
  CHECK(parse_string_list("ngmm,erm") == std::vector<std::string>{"ngmm", "erm"});
  CHECK(parse_bool("true"));
  CHECK_FALSE(parse_bool("0"));
  CHECK_THROWS(parse_bool("perhaps"));
}

TEST_CASE("config settings reach the options") {
  TradeoffOptions o;
  for (const auto& [k, v] : parse_config_text("alphas = 0,1\nregimes = misspec\n[ngmm]\nepochs = 3\n"
                                              "[baseline]\nblock = 10\n[fit]\nhidden = 8\nfull_scale_ignored = 1\n")) {
    if (k == "fit.full_scale_ignored") {
      CHECK_THROWS(apply_tradeoff_setting(o, k, v));
      continue;
    }
    apply_tradeoff_setting(o, k, v);
  }
  CHECK(o.alphas == std::vector<double>{0.0, 1.0});
  CHECK(o.regimes == std::vector<Regime>{Regime::Misspecified});
  CHECK(o.ngmm_fit.epochs == 3);
  CHECK(o.baseline_fit.epochs == 20);
  CHECK(o.baseline_fit.block_size == 10);
  CHECK(o.ngmm_fit.hidden == std::vector<Eigen::Index>{8});
  apply_tradeoff_setting(o, "full_scale", "true");
  CHECK(o.n_train_envs == 50);
  CHECK(o.n_per_env == 1000);
  CHECK(o.reps == 10);
  CHECK_THROWS(apply_tradeoff_setting(o, "epochs", "3"));
  CHECK_THROWS(apply_tradeoff_setting(o, "ngmm.lr", "fast"));

  ColoredOptions c;
  apply_colored_setting(c, "test_r", "-0.1,0.1");
  apply_colored_setting(c, "ngmm.rule", "grid:3:64");
  CHECK(c.test_r == std::vector<double>{-0.1, 0.1});
  CHECK(c.ngmm_fit.rule.kind() == RuleKind::TruncatedGrid);
  CHECK_THROWS(apply_colored_setting(c, "mode", "png"));
}

TEST_CASE("experiment defaults follow the documented settings") {
  const TradeoffOptions t;
  CHECK(t.lambda_irm == 0.01);
  CHECK(t.lambda_varex == 0.01);
  CHECK(t.n_train_envs == 20);
  CHECK(t.n_per_env == 500);
  CHECK(t.reps == 3);
  CHECK(t.baseline_fit.block_size == 100);
  CHECK(t.ngmm_fit.epochs == 20);
  const ColoredOptions c;
  CHECK(c.lambda_irm == 20.0);
  CHECK(c.lambda_varex == 100.0);
  CHECK(c.ngmm_fit.block_size == 64);
  CHECK(c.ngmm_fit.learning_rate == 1e-3);
  CHECK(c.ngmm_fit.rule.half_width() == 10.0);
  CHECK(c.ngmm_fit.hidden == std::vector<Eigen::Index>{32, 32});
  const auto methods = parse_methods({"ngmm", "irm"}, 0.5, 2.0);
  CHECK(methods[0].random_intercept);
  CHECK(methods[1].penalty.lambda == 0.5);
  CHECK_THROWS(parse_methods({"dro"}, 0, 0));
}

TEST_CASE("hashes and seeds are stable") {
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(hex64(0xabcULL) == "0000000000000abc");
  CHECK(derive_seed(1, {2, 3}) == derive_seed(1, {2, 3}));
  CHECK(derive_seed(1, {2, 3}) != derive_seed(1, {3, 2}));
  TradeoffOptions a, b;
  CHECK(a.canonical() == b.canonical());
  b.ngmm_fit.learning_rate = 0.02;
  CHECK(fnv1a(a.canonical()) != fnv1a(b.canonical()));
}

TEST_CASE("tradeoff run shape, oracle rows and byte-identical output") {
  const TradeoffOptions o = tiny_tradeoff();
  const auto rows = run_tradeoff(o);
  CHECK(rows.size() == 2 * 5 * (4 + 1) * 2);
  for (const auto& r : rows) {
    if (r.method != "bayes") continue;
    SimConfig cfg = o.scales;
    cfg.regime = r.regime;
    cfg.alpha = r.alpha;
    CHECK(r.env_avg_risk == bayes_risk(cfg));
  }
  const Provenance prov{o.seed, hex64(fnv1a(o.canonical())), kVersion};
  write_tradeoff_csv(rows, prov, tmp("ngmm_t1.csv"));
  write_tradeoff_csv(run_tradeoff(o), prov, tmp("ngmm_t2.csv"));
  const std::string text = slurp(tmp("ngmm_t1.csv"));
  CHECK(text == slurp(tmp("ngmm_t2.csv")));
  CHECK(text.rfind("regime,alpha,method,rep,env_avg_risk,stderr,sigma_hat,status,seed,config_hash,version\n", 0) ==
        0);
  CHECK(text.find(prov.config_hash) != std::string::npos);
}

TEST_CASE("diverging methods are flagged and the run continues") {
  TradeoffOptions o = tiny_tradeoff();
  o.alphas = {0.5};
  o.regimes = {Regime::WellSpecified};
  o.reps = 1;
  o.methods = {"ngmm", "erm"};
  o.ngmm_fit.learning_rate = 1e300;
  const auto rows = run_tradeoff(o);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].status == "diverged");
  CHECK(rows[1].status == "ok");
}

TEST_CASE("colored run reports oracle accuracies") {
  ColoredOptions o;
  o.base.n_per_env = 200;
  o.n_test_per_env = 200;
  o.reps = 1;
  o.methods = {"ngmm", "erm"};
  o.ngmm_fit.epochs = 1;
  o.baseline_fit.epochs = 1;
  o.ngmm_fit.hidden = {4};
  o.baseline_fit.hidden = {4};
  const auto rows = run_colored(o);
  CHECK(rows.size() == 5 * 2);
  for (const auto& r : rows) {
    ColoredConfig cfg = o.base;
    cfg.r = r.test_r;
    CHECK(r.bayes_accuracy == bayes_accuracy_colored(cfg));
    CHECK(r.accuracy_gap == doctest::Approx(r.bayes_accuracy - r.accuracy));
    if (r.test_r == 0.0) CHECK(r.bayes_accuracy == doctest::Approx(0.75));
    if (r.test_r == 0.15) CHECK(r.bayes_accuracy == doctest::Approx(0.7875));
  }
}

TEST_CASE("identity suite is deterministic and rejects broken predictors up front") {
  IdentitiesOptions o;
  o.n_joints = 20;
  o.seed = 3;
  const IdentitiesReport a = run_identities(o), b = run_identities(o);
  CHECK(a.all_passed);
  REQUIRE(a.results.size() == b.results.size());
  for (std::size_t i = 0; i < a.results.size(); ++i) CHECK(a.results[i].max_deviation == b.results[i].max_deviation);
  std::ostringstream os;
  print_identities(a, os);
  CHECK(os.str().find("lemma1") != std::string::npos);

  Philox rng(1);
  const DiscreteJoint j = DiscreteJoint::random(rng, 2, 2, 2);
  PredictorTable q = PredictorTable::Constant(2, 2, 0.7);
  CHECK_THROWS_AS(risk_report(j, q), std::invalid_argument);
}
