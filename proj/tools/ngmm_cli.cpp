// Experiment runner: tradeoff simulation, colored mechanism, identity suite,
// plus fit / eval / gen on dataset CSVs.

#include "ngmm/checkpoint.hpp"
#include "ngmm/config.hpp"
#include "ngmm/experiments.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>

namespace fs = std::filesystem;
using namespace ngmm;

namespace {

struct KeyFlag {
  std::string key;
  std::string value;
  CLI::Option* option = nullptr;
};

/// Each setting key becomes --key-with-dashes (dots become dashes too).
void add_key_flags(CLI::App* sub, std::vector<KeyFlag>& flags, const std::vector<std::pair<std::string, std::string>>& keys) {
  flags.reserve(keys.size());
  for (const auto& [key, help] : keys) {
    flags.push_back({key, "", nullptr});
    std::string flag = key;
    for (auto& ch : flag)
      if (ch == '_' || ch == '.') ch = '-';
    flags.back().option = sub->add_option("--" + flag, flags.back().value, help);
  }
}

template <typename Apply>
void apply_all(const std::string& config_path, const std::vector<KeyFlag>& flags, Apply&& apply) {
  if (!config_path.empty())
    for (const auto& [k, v] : read_config_file(config_path)) apply(k, v);
  for (const auto& f : flags)
    if (f.option->count() > 0) apply(f.key, f.value);
}

std::string default_out_dir() {
  if (const char* env = std::getenv("NGMM_OUT_DIR"); env && *env) return env;
  return "results";
}

const std::vector<std::pair<std::string, std::string>> kFitKeys = {
    {"lr", "learning rate"},
    {"epochs", "training epochs"},
    {"envs_per_step", "environments per optimizer step"},
    {"block", "rows per environment block (0 = whole environment)"},
    {"rule", "marginal rule: closed | gh:N | grid:B:N"},
    {"hidden", "hidden widths, e.g. 32,32 (none for a linear fixed part)"},
    {"freeze_noise", "keep the gaussian noise scale at its initial value"},
    {"init_sigma", "initial intercept scale"},
    {"init_noise", "initial gaussian noise scale"}};

std::vector<std::pair<std::string, std::string>> with_fit_sections(std::vector<std::pair<std::string, std::string>> keys) {
  for (const char* section : {"ngmm", "baseline"})
    for (const auto& [k, h] : kFitKeys) keys.emplace_back(std::string(section) + "." + k, std::string(section) + " " + h);
  return keys;
}

Provenance provenance(std::uint64_t seed, const std::string& canonical) {
  return {seed, hex64(fnv1a(canonical)), kVersion};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Random-intercept neural mixed model experiments"};
  app.require_subcommand(1);
  std::string out_dir = default_out_dir();
  std::string config_path;
  bool quiet = false;
  app.add_option("--out", out_dir, "output directory (default $NGMM_OUT_DIR or ./results)");
  app.add_flag("--quiet", quiet, "suppress progress output");

  // tradeoff
  auto* trade = app.add_subcommand("tradeoff", "well-specified / misspecified risk tradeoff simulation");
  trade->add_option("--config", config_path, "key = value config file");
  std::vector<KeyFlag> trade_flags;
  add_key_flags(trade, trade_flags,
                with_fit_sections({{"sigma_e", "environment scale"},
                                   {"sigma_c", "causal feature scale"},
                                   {"sigma_u", "spurious feature noise"},
                                   {"sigma_eps", "label noise"},
                                   {"alphas", "alpha grid"},
                                   {"regimes", "wellspec,misspec"},
                                   {"train_envs", "training environments"},
                                   {"test_envs", "held-out environments"},
                                   {"n_per_env", "observations per environment"},
                                   {"reps", "repetitions"},
                                   {"methods", "ngmm,erm,irm,varex"},
                                   {"lambda_irm", "IRM penalty coefficient"},
                                   {"lambda_varex", "VaREx penalty coefficient"},
                                   {"seed", "base seed"},
                                   {"full_scale", "50 x 1000 environments with 10 repetitions"}}));

  // colored
  auto* colored = app.add_subcommand("colored", "colored parity/color mechanism");
  colored->add_option("--config", config_path, "key = value config file");
  std::vector<KeyFlag> colored_flags;
  add_key_flags(colored, colored_flags,
                with_fit_sections({{"a", "baseline even-parity label rate"},
                                   {"b", "baseline odd-parity label rate"},
                                   {"n_per_env", "training observations per environment"},
                                   {"n_test_per_env", "test observations per environment"},
                                   {"mode", "surrogate | idx"},
                                   {"signal", "surrogate parity signal scale"},
                                   {"noise", "surrogate parity noise"},
                                   {"idx_images", "IDX image file (idx mode)"},
                                   {"idx_labels", "IDX label file (idx mode)"},
                                   {"train_r", "training color effects"},
                                   {"test_r", "test color effects"},
                                   {"reps", "seeds"},
                                   {"methods", "ngmm,erm,irm,varex"},
                                   {"lambda_irm", "IRM penalty coefficient"},
                                   {"lambda_varex", "VaREx penalty coefficient"},
                                   {"seed", "base seed"}}));

  // identities
  auto* ident = app.add_subcommand("identities", "exact enumeration checks on random discrete joints");
  IdentitiesOptions id_opts;
  ident->add_option("--joints", id_opts.n_joints, "number of random joints")->check(CLI::PositiveNumber);
  ident->add_option("--seed", id_opts.seed, "seed");
  ident->add_option("--tol", id_opts.tolerance, "absolute tolerance");
  ident->add_option("--zero-fraction", id_opts.zero_fraction, "fraction of zeroed (e, x) cells")->check(CLI::Range(0.0, 1.0));

  // fit
  auto* fit = app.add_subcommand("fit", "fit one method on a dataset CSV (env_id, features..., y)");
  std::string fit_data, fit_method = "ngmm", fit_family = "gaussian", fit_ckpt;
  double fit_lambda = 0.0;
  std::uint64_t fit_seed = 0;
  fit->add_option("--data", fit_data, "dataset CSV")->required();
  fit->add_option("--method", fit_method, "ngmm | erm | irm | varex");
  fit->add_option("--family", fit_family, "gaussian | bernoulli");
  fit->add_option("--lambda", fit_lambda, "penalty coefficient for irm / varex");
  fit->add_option("--seed", fit_seed, "seed");
  fit->add_option("--checkpoint", fit_ckpt, "checkpoint path (default <out>/<method>.ckpt)");
  fit->add_option("--config", config_path, "key = value config file with fit settings");
  std::vector<KeyFlag> fit_flags;
  add_key_flags(fit, fit_flags, kFitKeys);

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset CSV");
  std::string eval_data, eval_ckpt, eval_name, eval_rule;
  eval->add_option("--data", eval_data, "dataset CSV")->required();
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
  eval->add_option("--name", eval_name, "method label in the report");
  eval->add_option("--rule", eval_rule, "override the checkpoint's marginal rule");

  // gen
  auto* gen = app.add_subcommand("gen", "write a synthetic dataset CSV");
  std::string gen_kind = "tradeoff", gen_path;
  gen->add_option("kind", gen_kind, "tradeoff | colored")->check(CLI::IsMember({"tradeoff", "colored"}));
  gen->add_option("--output", gen_path, "CSV path (default <out>/<kind>.csv)");
  SimConfig gen_sim;
  std::string gen_regime = "wellspec";
  std::vector<double> gen_r{0.10, 0.15, 0.20};
  ColoredConfig gen_col;
  gen->add_option("--alpha", gen_sim.alpha, "alpha");
  gen->add_option("--regime", gen_regime, "wellspec | misspec");
  gen->add_option("--n-envs", gen_sim.n_envs, "environments");
  gen->add_option("--n-per-env", gen_sim.n_per_env, "observations per environment");
  gen->add_option("--seed", gen_sim.seed, "seed");
  gen->add_option("--r", gen_r, "colored: one environment per r value")->delimiter(',');
  gen->add_option("--colored-n", gen_col.n_per_env, "colored: observations per environment");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  std::ostream* log = quiet ? nullptr : &std::cerr;
  try {
    fs::create_directories(out_dir);

    if (trade->parsed()) {
      TradeoffOptions opts;
      apply_all(config_path, trade_flags, [&](const std::string& k, const std::string& v) { apply_tradeoff_setting(opts, k, v); });
      const auto rows = run_tradeoff(opts, log);
      const std::string path = (fs::path(out_dir) / "tradeoff.csv").string();
      write_tradeoff_csv(rows, provenance(opts.seed, opts.canonical()), path);
      std::cout << "wrote " << rows.size() << " rows to " << path << '\n';
      return 0;
    }

    if (colored->parsed()) {
      ColoredOptions opts;
      apply_all(config_path, colored_flags, [&](const std::string& k, const std::string& v) { apply_colored_setting(opts, k, v); });
      const auto rows = run_colored(opts, log);
      const std::string path = (fs::path(out_dir) / "colored.csv").string();
      write_colored_csv(rows, provenance(opts.seed, opts.canonical()), path);
      std::cout << "wrote " << rows.size() << " rows to " << path << '\n';
      return 0;
    }

    if (ident->parsed()) {
      const IdentitiesReport report = run_identities(id_opts);
      print_identities(report, std::cout);
      std::cout << "joints: " << id_opts.n_joints << "  seed: " << id_opts.seed << "  seconds: " << report.seconds << '\n';
      if (!report.all_passed) {
        const std::string path = (fs::path(out_dir) / "offending_joint.csv").string();
        write_joint_csv(*report.offending, path);
        std::cerr << "identity '" << report.offending_identity << "' failed; joint written to " << path << '\n';
        return 1;
      }
      return 0;
    }

    if (fit->parsed()) {
      FitConfig cfg;
      cfg.family = ResponseFamily::parse(fit_family);
      if (cfg.family.is_bernoulli()) cfg.rule = MarginalRule::gauss_hermite(32);
      apply_all(config_path, fit_flags, [&](const std::string& k, const std::string& v) { apply_fit_setting(cfg, k, v); });
      cfg.seed = fit_seed;
      const EnvDataset data = read_dataset_csv(fit_data);
      const auto methods = parse_methods({fit_method}, fit_lambda, fit_lambda);
      const FitResult result = methods.front().random_intercept ? fit_ngmm(data, cfg)
                                                                 : fit_baseline(data, cfg, methods.front().penalty);
      const std::string ckpt = fit_ckpt.empty() ? (fs::path(out_dir) / (fit_method + ".ckpt")).string() : fit_ckpt;
      save_checkpoint({result.params, cfg.rule, cfg.seed}, ckpt);
      const std::string trace = ckpt + ".loss.csv";
      std::ofstream tr(trace);
      tr << "epoch,loss\n";
      tr.precision(12);
      for (std::size_t e = 0; e < result.loss_trace.size(); ++e) tr << e << ',' << result.loss_trace[e] << '\n';
      std::cout << "checkpoint " << ckpt << "  loss " << result.loss_trace.front() << " -> " << result.loss_trace.back();
      if (result.params.has_random_intercept()) std::cout << "  sigma " << result.params.sigma();
      if (result.params.family().is_gaussian()) std::cout << "  noise " << result.params.noise();
      std::cout << '\n';
      return 0;
    }

    if (eval->parsed()) {
      const Checkpoint ckpt = load_checkpoint(eval_ckpt);
      const MarginalRule rule = eval_rule.empty() ? ckpt.rule : MarginalRule::parse(eval_rule);
      const EnvDataset data = read_dataset_csv(eval_data);
      const std::string name = eval_name.empty() ? fs::path(eval_ckpt).stem().string() : eval_name;
      std::vector<EvalRow> rows;
      std::vector<double> pooled_p, pooled_y;
      double sq = 0.0, nll = 0.0;
      std::size_t n = 0;
      for (const auto& env : data.envs) {
        const auto pred = predict(ckpt.params, env.block.features, rule);
        if (ckpt.params.family().is_bernoulli()) {
          Eigen::VectorXd p1(env.block.size());
          for (Eigen::Index i = 0; i < p1.size(); ++i) {
            p1(i) = pred[i].mean;
            pooled_p.push_back(p1(i));
            pooled_y.push_back(env.block.responses(i));
          }
          append_binary_rows(rows, name, std::to_string(env.id), eval_binary(p1, env.block.responses), ckpt.seed);
        } else {
          double env_sq = 0.0, env_nll = 0.0;
          for (Eigen::Index i = 0; i < env.block.size(); ++i) {
            const double r = env.block.responses(i) - pred[i].mean;
            env_sq += r * r;
            env_nll += 0.5 * (std::log(2.0 * std::numbers::pi * pred[i].variance) + r * r / pred[i].variance);
          }
          const double ne = static_cast<double>(env.block.size());
          rows.push_back({name, std::to_string(env.id), "mse", env_sq / ne, 0.0, ckpt.seed});
          rows.push_back({name, std::to_string(env.id), "nll", env_nll / ne, 0.0, ckpt.seed});
          sq += env_sq;
          nll += env_nll;
          n += env.block.size();
        }
      }
      if (ckpt.params.family().is_bernoulli()) {
        append_binary_rows(rows, name, "pooled",
                           eval_binary(Eigen::Map<Eigen::VectorXd>(pooled_p.data(), pooled_p.size()),
                                       Eigen::Map<Eigen::VectorXd>(pooled_y.data(), pooled_y.size())),
                           ckpt.seed);
      } else {
        rows.push_back({name, "pooled", "mse", sq / n, 0.0, ckpt.seed});
        rows.push_back({name, "pooled", "nll", nll / n, 0.0, ckpt.seed});
      }
      const std::string path = (fs::path(out_dir) / ("eval_" + name + ".csv")).string();
      write_eval_csv(rows, path);
      std::cout << "wrote " << rows.size() << " rows to " << path << '\n';
      return 0;
    }

    if (gen->parsed()) {
      const std::string path = gen_path.empty() ? (fs::path(out_dir) / (gen_kind + ".csv")).string() : gen_path;
      if (gen_kind == "tradeoff") {
        gen_sim.regime = parse_regime(gen_regime);
        write_dataset_csv(gen_tradeoff(gen_sim).data, path);
      } else {
        gen_col.seed = gen_sim.seed;
        write_dataset_csv(gen_colored(gen_col, gen_r), path);
      }
      std::cout << "wrote " << path << '\n';
      return 0;
    }
  } catch (const FitError& e) {
    std::cerr << "error: " << e.what() << " (epoch " << e.epoch() << ", environments";
    for (int id : e.env_ids()) std::cerr << ' ' << id;
    std::cerr << ")\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
