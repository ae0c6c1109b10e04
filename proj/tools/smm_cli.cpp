// Command-line front end: data generation, single fits, evaluation, attacks,
// hyperparameter selection, the experiment drivers and the expansion check.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <fmt/format.h>

#include "smm/attacks.hpp"
#include "smm/data.hpp"
#include "smm/duality.hpp"
#include "smm/error.hpp"
#include "smm/estimators.hpp"
#include "smm/experiments.hpp"
#include "smm/kernels.hpp"
#include "smm/models.hpp"
#include "smm/random.hpp"
#include "smm/selection.hpp"
#include "smm/serialize.hpp"

namespace fs = std::filesystem;
using namespace smm;

namespace {

struct Globals {
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string config;
  std::string out = ".";
  int threads = 1;
  bool threads_set = false;
};

struct ModelOpts {
  std::string family = "quadratic";
  std::vector<int> hidden{20, 3};
  double slope = 0.01;
};

ExperimentConfig load_config(const Globals& g, std::optional<Experiment> name = std::nullopt) {
  ExperimentConfig cfg = name ? default_config(*name) : ExperimentConfig{};
  if (!g.config.empty()) {
    Json j = read_json_file(g.config);
    if (name) {
      if (j.contains("experiment") && parse_experiment(j["experiment"].get<std::string>()) != *name)
        throw InvalidArgument("config names a different experiment than the command line");
      j["experiment"] = to_string(*name);
    }
    cfg = experiment_config_from_json(j);
  }
  if (g.seed_set) cfg.base_seed = g.seed;
  if (g.threads_set) cfg.threads = g.threads;
  return cfg;
}

ParamModel build_model(const ModelOpts& m, Eigen::Index dim_t) {
  switch (parse_model_family(m.family)) {
    case ModelFamily::linear:
      return ParamModel::linear(static_cast<int>(dim_t));
    case ModelFamily::quadratic:
      if (dim_t != 1) throw InvalidArgument("the quadratic model needs one treatment column");
      return ParamModel::quadratic();
    case ModelFamily::mlp:
      return ParamModel::mlp(static_cast<int>(dim_t), m.hidden, m.slope);
  }
  throw InvalidArgument("unknown model family");
}

ParamModel initial_model(const ModelOpts& m, Eigen::Index dim_t, std::uint64_t seed) {
  ParamModel model = build_model(m, dim_t);
  return model.family() == ModelFamily::mlp ? model.initialized(seed) : model;
}

void write_manifest(const fs::path& dir, const std::string& command, const Globals& g, const Json& config,
                    const Json& extra = Json::object()) {
  Json j;
  j["command"] = command;
  j["seed"] = g.seed;
  j["threads"] = g.threads;
  j["config"] = config;
  j["versions"] = {{"sinkhorn_iv", SMM_CLI_VERSION},
                   {"eigen", fmt::format("{}.{}.{}", EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION)},
                   {"compiler", __VERSION__}};
  for (const auto& [k, v] : extra.items()) j[k] = v;
  write_text_file(dir / "manifest.json", j.dump(2) + "\n");
}

void cmd_gen(const Globals& g, const std::string& scenario, const std::string& variant, Eigen::Index n) {
  const Scenario s = parse_scenario(scenario);
  if (n < 2) throw InvalidArgument("n must be at least 2");
  const auto [ds, params] = s == Scenario::simple_iv        ? gen_simple_iv(n, g.seed)
                            : s == Scenario::adversarial_nl ? gen_adversarial_nl(n, g.seed)
                                                            : gen_network_iv(n, g.seed, parse_network_variant(variant));
  const fs::path out(g.out);
  save_csv(ds, out / "data.csv");
  write_text_file(out / "params.json", to_json(params).dump(2) + "\n");
  write_manifest(out, "gen", g, {{"scenario", scenario}, {"variant", variant}, {"n", n}});
  fmt::print("wrote {} rows to {}\n", n, (out / "data.csv").string());
}

Json fit_config_echo(Method method, const ExperimentConfig& cfg) {
  switch (method) {
    case Method::smm:
      return to_json(cfg.selection.smm);
    case Method::vmm:
      return to_json(cfg.selection.vmm);
    default:
      return {{"opt", to_json(cfg.selection.opt)}};
  }
}

void cmd_fit(const Globals& g, const std::string& data, const std::string& method_name, const ModelOpts& mo) {
  const ExperimentConfig cfg = load_config(g);
  const Method method = parse_method(method_name);
  const Dataset ds = load_csv(data);
  const ParamModel init = initial_model(mo, ds.dim_t(), derive_seed(cfg.base_seed, streams::model_init));
  FitResult fit;
  switch (method) {
    case Method::lsq:
      fit = fit_lsq(ds, init, cfg.selection.opt);
      break;
    case Method::mmr: {
      const FitResult first = fit_lsq(ds, init, cfg.selection.opt);
      fit = fit_mmr(ds, init.with_theta(first.theta_hat), gram(ds.z(), cfg.selection.train_bandwidth), cfg.selection.opt);
      break;
    }
    case Method::vmm:
      fit = fit_vmm(ds, init, gram(ds.z(), cfg.selection.train_bandwidth), cfg.selection.vmm);
      break;
    case Method::smm:
      fit = fit_smm(ds, init, gram(ds.z(), cfg.selection.train_bandwidth), cfg.selection.smm);
      break;
  }
  const fs::path out(g.out);
  write_text_file(out / "fit.json", to_json(fit, init, fit_config_echo(method, cfg)).dump(2) + "\n");
  write_manifest(out, "fit", g, to_json(cfg), {{"data", data}, {"method", method_name}});
  if (fit.theta_hat.size() <= 10)
    fmt::print("{} objective {:.6g} theta [{}]\n", method_name, fit.stage_objectives.back(),
               fmt::join(std::vector<double>(fit.theta_hat.data(), fit.theta_hat.data() + fit.theta_hat.size()), ", "));
  else
    fmt::print("{} objective {:.6g}, {} parameters in {}\n", method_name, fit.stage_objectives.back(),
               fit.theta_hat.size(), (out / "fit.json").string());
}

ParamModel load_fitted_model(const std::string& path) {
  const Json j = read_json_file(path);
  return model_from_json(j.contains("model") ? j["model"] : j);
}

void cmd_eval(const Globals& g, const std::string& fit_path, const std::string& params_path, Eigen::Index n) {
  const ParamModel model = load_fitted_model(fit_path);
  const ScenarioParams params = scenario_params_from_json(read_json_file(params_path));
  const Dataset eval = sample_scenario(params, n, derive_seed(g.seed, streams::evaluation));
  const double mse = prediction_error(model, params, eval);
  const fs::path out(g.out);
  write_text_file(out / "eval.json", Json{{"mse", mse}, {"n_eval", n}}.dump(2) + "\n");
  write_manifest(out, "eval", g, {{"fit", fit_path}, {"params", params_path}, {"n_eval", n}});
  fmt::print("prediction error {:.6g} on {} fresh rows\n", mse, n);
}

void cmd_attack(const Globals& g, const std::string& fit_path, const std::string& params_path, Eigen::Index n,
                const std::string& method_name) {
  const ExperimentConfig cfg = load_config(g);
  const ParamModel model = load_fitted_model(fit_path);
  const ScenarioParams params = scenario_params_from_json(read_json_file(params_path));
  const Dataset test = sample_scenario(params, n, derive_seed(g.seed, streams::attack));
  AttackConfig atk = cfg.attack;
  atk.seed = g.seed;
  const auto rows = adversarial_mse_sweep(test, params, model, atk);
  const fs::path out(g.out);
  write_text_file(out / "attack.csv", sweep_csv(rows, parse_method(method_name)));
  write_manifest(out, "attack", g, to_json(cfg), {{"fit", fit_path}, {"params", params_path}, {"n_test", n}});
  for (const auto& r : rows) fmt::print("eps {:.2f}  mse {:.6g} +- {:.2g}\n", r.eps, r.mse, r.std_error);
}

void cmd_select(const Globals& g, const std::string& train_path, const std::string& valid_path,
                const std::string& method_name, const ModelOpts& mo) {
  const ExperimentConfig cfg = load_config(g);
  const Method method = parse_method(method_name);
  const Dataset train = load_csv(train_path);
  const Dataset valid = load_csv(valid_path);
  const ParamModel init = initial_model(mo, train.dim_t(), derive_seed(cfg.base_seed, streams::model_init));
  const SelectionResult sel = select_and_fit(train, valid, method, init, cfg.grid, cfg.selection);
  const fs::path out(g.out);
  write_text_file(out / "scores.csv", score_table_csv(sel));
  Json fit = to_json(sel.fit, init, fit_config_echo(method, cfg));
  fit["chosen"] = {{"eps", real_to_json(sel.chosen.epsilon)},
                   {"lambda_over_eps", real_to_json(sel.chosen.lambda_over_eps)},
                   {"lambda", real_to_json(sel.chosen.lambda)},
                   {"valid_mmr", sel.chosen.valid_mmr}};
  fit["warnings"] = sel.warnings;
  write_text_file(out / "fit.json", fit.dump(2) + "\n");
  write_manifest(out, "select", g, to_json(cfg), {{"train", train_path}, {"valid", valid_path}});
  for (const auto& w : sel.warnings) fmt::print(stderr, "warning: {}\n", w);
  fmt::print("chosen valid_mmr {:.6g} over {} grid points\n", sel.chosen.valid_mmr, sel.table.size());
}

void cmd_experiment(const Globals& g, const std::string& name, bool out_set) {
  ExperimentConfig cfg = load_config(g, parse_experiment(name));
  if (out_set || cfg.output_dir.empty()) cfg.output_dir = g.out;
  cfg.validate();
  const auto start = std::chrono::steady_clock::now();
  const ExperimentResult res = run_experiment(cfg);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const fs::path out(cfg.output_dir);
  Json extra = {{"runtime_seconds", secs}};
  if (cfg.experiment == Experiment::duality_check) {
    write_text_file(out / "duality.json", to_json(res.duality).dump(2) + "\n");
    fmt::print("oracle max rel error {:.3g}, expansion slope {:.3f}{}\n", res.duality.max_oracle_rel_error,
               res.duality.expansion.slope, res.duality.expansion.inconclusive ? " (inconclusive)" : "");
  } else {
    write_text_file(out / "records.csv", records_csv(res));
    write_text_file(out / "aggregates.csv", aggregates_csv(res));
    for (const auto& a : res.aggregates)
      fmt::print("{:<24} {:<4} mean {:.5g}  se {:.2g}  median {:.5g}  n {}  failed {}\n", a.setting,
                 to_string(a.method), a.mean, a.std_error, a.median, a.count, a.failures);
    if (cfg.experiment == Experiment::rate_test) {
      extra["rate_slope"] = res.rate_slope;
      fmt::print("log-log slope of median parameter error: {:.3f}\n", res.rate_slope);
    }
  }
  Json seeds = Json::array();
  for (int r = 0; r < cfg.n_replicates; ++r) seeds.push_back(cfg.base_seed + static_cast<std::uint64_t>(r));
  extra["replicate_seeds"] = seeds;
  Globals gm = g;
  gm.seed = cfg.base_seed;
  gm.threads = cfg.threads;
  write_manifest(out, "experiment " + name, gm, to_json(cfg), extra);
}

void cmd_verify(const Globals& g, Eigen::Index n) {
  const ExperimentConfig cfg = load_config(g, Experiment::duality_check);
  const ExpansionInstance inst = expansion_instance(n, cfg.base_seed);
  const ExpansionReport rep =
      verify_expansion_order(inst.data, inst.model, inst.h, cfg.duality_eps, inst.cost, cfg.n_mc, cfg.base_seed);
  Json j = to_json(rep);
  Json eps = Json::array(), mc = Json::array(), ex = Json::array(), se = Json::array();
  for (const auto& p : rep.points) {
    eps.push_back(p.epsilon);
    mc.push_back(p.mc_value);
    ex.push_back(p.expansion_value);
    se.push_back(p.mc_stderr);
  }
  j["eps"] = eps;
  j["mc_value"] = mc;
  j["expansion_value"] = ex;
  j["mc_stderr"] = se;
  const fs::path out(g.out);
  write_text_file(out / "verify.json", j.dump(2) + "\n");
  write_manifest(out, "verify", g, to_json(cfg), {{"n", n}});
  for (const auto& p : rep.points)
    fmt::print("eps {:.0e}  mc {:.8g} +- {:.2g}  expansion {:.8g}  residual {:.3g}\n", p.epsilon, p.mc_value,
               p.mc_stderr, p.expansion_value, p.residual);
  fmt::print("slope {:.3f}{}\n", rep.slope, rep.inconclusive ? " (inconclusive: residual under noise floor)" : "");
}

void add_model_opts(CLI::App* sub, ModelOpts& mo) {
  sub->add_option("--model", mo.family, "linear, quadratic or mlp")->capture_default_str();
  sub->add_option("--hidden", mo.hidden, "MLP hidden widths, comma separated")->delimiter(',')->capture_default_str();
  sub->add_option("--slope", mo.slope, "leaky-ReLU negative slope")->capture_default_str();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel Sinkhorn method of moments for instrumental-variable regression"};
  app.require_subcommand(1);
  Globals g;
  app.add_option_function<std::uint64_t>("--seed", [&](std::uint64_t s) { g.seed = s, g.seed_set = true; },
                                         "base random seed (default 0)");
  app.add_option("--config", g.config, "JSON file mirroring the experiment configuration");
  auto* out_opt = app.add_option("--out", g.out, "output directory")->capture_default_str();
  app.add_option_function<int>("--threads", [&](int t) { g.threads = t, g.threads_set = true; }, "worker threads")
      ->check(CLI::PositiveNumber);
  app.set_version_flag("--version", SMM_CLI_VERSION);

  std::string scenario = "simple_iv", variant = "sin", data, method = "smm", fit_path, params_path, train, valid,
              experiment;
  Eigen::Index n = 1000, n_eval = 10000, n_test = 1000, n_verify = 20;
  ModelOpts mo;

  auto* gen = app.add_subcommand("gen", "generate a synthetic data set (data.csv, params.json)");
  gen->add_option("--scenario", scenario, "simple_iv, adversarial_nl or network_iv")->capture_default_str();
  gen->add_option("--variant", variant, "network_iv structural function: sin, abs, step, linear")
      ->capture_default_str();
  gen->add_option("-n,--n", n, "rows")->capture_default_str();

  auto* fit = app.add_subcommand("fit", "fit one estimator at fixed hyperparameters (fit.json)");
  fit->add_option("--data", data, "training CSV")->required();
  fit->add_option("--method", method, "lsq, mmr, vmm or smm")->capture_default_str();
  add_model_opts(fit, mo);

  auto* eval = app.add_subcommand("eval", "prediction error of a fitted model on a fresh sample (eval.json)");
  eval->add_option("--fit", fit_path, "fit.json from fit or select")->required();
  eval->add_option("--params", params_path, "params.json from gen")->required();
  eval->add_option("--n-eval", n_eval, "evaluation rows")->capture_default_str();

  auto* attack = app.add_subcommand("attack", "FGSM sweep over the configured eps grid (attack.csv)");
  attack->add_option("--fit", fit_path, "fit.json from fit or select")->required();
  attack->add_option("--params", params_path, "params.json from gen")->required();
  attack->add_option("--n-test", n_test, "test rows")->capture_default_str();
  attack->add_option("--method", method, "method label for the CSV")->capture_default_str();

  auto* select = app.add_subcommand("select", "grid search scored by validation MMR (scores.csv, fit.json)");
  select->add_option("--train", train, "training CSV")->required();
  select->add_option("--valid", valid, "validation CSV")->required();
  select->add_option("--method", method, "lsq, mmr, vmm or smm")->capture_default_str();
  add_model_opts(select, mo);

  auto* exp = app.add_subcommand("experiment", "run a benchmark experiment");
  exp->add_option("name", experiment,
                  "corruption_sweep, adversarial_sweep, network_iv, rate_test, duality_check, hparam_sensitivity")
      ->required();

  auto* verify = app.add_subcommand("verify", "Monte Carlo check of the small-eps expansion (verify.json)");
  verify->add_option("-n,--n", n_verify, "rows of the smooth instance")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) cmd_gen(g, scenario, variant, n);
    else if (*fit) cmd_fit(g, data, method, mo);
    else if (*eval) cmd_eval(g, fit_path, params_path, n_eval);
    else if (*attack) cmd_attack(g, fit_path, params_path, n_test, method);
    else if (*select) cmd_select(g, train, valid, method, mo);
    else if (*exp) cmd_experiment(g, experiment, out_opt->count() > 0);
    else if (*verify) cmd_verify(g, n_verify);
  } catch (const Error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return exit_code_for(e.kind());
  } catch (const Json::exception& e) {
    fmt::print(stderr, "error: invalid config: {}\n", e.what());
    return 2;
  } catch (const fs::filesystem_error& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 3;
  }
  return 0;
}
