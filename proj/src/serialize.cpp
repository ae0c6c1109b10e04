#include "smm/serialize.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "smm/error.hpp"

namespace smm {

namespace {

void require_object(const Json& j, const char* what) {
  if (!j.is_object()) throw InvalidArgument(fmt::format("{} must be a JSON object", what));
}

template <typename T>
T get_as(const Json& j, const char* what) {
  try {
    return j.get<T>();
  } catch (const Json::exception& e) {
    throw InvalidArgument(fmt::format("bad value for '{}': {}", what, e.what()));
  }
}

const Json& at(const Json& j, const char* key) {
  if (!j.contains(key)) throw InvalidArgument(fmt::format("missing key '{}'", key));
  return j[key];
}

std::vector<double> reals_from_json(const Json& j, const char* what) {
  if (!j.is_array()) throw InvalidArgument(fmt::format("'{}' must be an array", what));
  std::vector<double> out;
  for (const auto& v : j) out.push_back(real_from_json(v, what));
  return out;
}

std::string csv_real(double v) {
  if (std::isnan(v)) return "";
  return fmt::format("{}", v);
}

}  // namespace

Json real_to_json(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

double real_from_json(const Json& j, const char* what) {
  if (j.is_number()) return j.get<double>();
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "infinity") return kInf;
    if (s == "-inf") return -kInf;
  }
  throw InvalidArgument(fmt::format("'{}' must be a number or \"inf\"", what));
}

Json to_json(const ScenarioParams& p) {
  Json j;
  j["scenario"] = to_string(p.scenario);
  switch (p.scenario) {
    case Scenario::simple_iv:
      j["theta0"] = std::vector<double>(p.theta0.data(), p.theta0.data() + p.theta0.size());
      break;
    case Scenario::adversarial_nl:
      j["a"] = std::vector<double>(p.a.data(), p.a.data() + p.a.size());
      j["b"] = std::vector<double>(p.b.data(), p.b.data() + p.b.size());
      break;
    case Scenario::network_iv:
      j["variant"] = to_string(p.variant);
      break;
  }
  return j;
}

ScenarioParams scenario_params_from_json(const Json& j) {
  require_object(j, "scenario params");
  ScenarioParams p;
  p.scenario = parse_scenario(get_as<std::string>(at(j, "scenario"), "scenario"));
  auto vec = [&](const char* key) {
    if (!j.contains(key)) throw InvalidArgument(fmt::format("scenario params lack '{}'", key));
    const auto v = reals_from_json(j[key], key);
    return Eigen::VectorXd(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  };
  switch (p.scenario) {
    case Scenario::simple_iv:
      p.theta0 = vec("theta0");
      if (p.theta0.size() != 3) throw InvalidArgument("theta0 must have 3 entries");
      break;
    case Scenario::adversarial_nl:
      p.a = vec("a").transpose();
      p.b = vec("b");
      if (p.a.size() != 5 || p.b.size() != 5) throw InvalidArgument("a and b must have 5 entries");
      break;
    case Scenario::network_iv:
      p.variant = parse_network_variant(get_as<std::string>(at(j, "variant"), "variant"));
      break;
  }
  return p;
}

Json to_json(const ParamModel& model) {
  Json j;
  j["family"] = to_string(model.family());
  j["dim_t"] = model.dim_t();
  if (model.family() == ModelFamily::mlp) {
    j["hidden"] = model.arch().hidden;
    j["slope"] = model.arch().slope;
  }
  j["theta"] = std::vector<double>(model.theta().data(), model.theta().data() + model.theta().size());
  return j;
}

ParamModel model_from_json(const Json& j) {
  require_object(j, "model");
  const ModelFamily family = parse_model_family(get_as<std::string>(at(j, "family"), "family"));
  const int dim_t = j.contains("dim_t") ? get_as<int>(j["dim_t"], "dim_t") : 1;
  ParamModel m = family == ModelFamily::linear      ? ParamModel::linear(dim_t)
                 : family == ModelFamily::quadratic ? ParamModel::quadratic()
                                                    : ParamModel::mlp(dim_t,
                                                                      j.contains("hidden")
                                                                          ? get_as<std::vector<int>>(j["hidden"], "hidden")
                                                                          : std::vector<int>{20, 3},
                                                                      j.contains("slope")
                                                                          ? get_as<double>(j["slope"], "slope")
                                                                          : 0.01);
  if (j.contains("theta")) {
    const auto v = reals_from_json(j["theta"], "theta");
    m = m.with_theta(Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
  }
  return m;
}

Json to_json(const OptimizerConfig& c) {
  return {{"memory", c.memory},   {"grad_tol", c.grad_tol}, {"max_iters", c.max_iters},
          {"armijo", c.armijo},   {"shrink", c.shrink},     {"max_backtracks", c.max_backtracks}};
}

OptimizerConfig optimizer_from_json(const Json& j, OptimizerConfig c) {
  require_object(j, "opt");
  for (const auto& [k, v] : j.items()) {
    if (k == "memory") c.memory = get_as<int>(v, "memory");
    else if (k == "grad_tol") c.grad_tol = get_as<double>(v, "grad_tol");
    else if (k == "max_iters") c.max_iters = get_as<int>(v, "max_iters");
    else if (k == "armijo") c.armijo = get_as<double>(v, "armijo");
    else if (k == "shrink") c.shrink = get_as<double>(v, "shrink");
    else if (k == "max_backtracks") c.max_backtracks = get_as<int>(v, "max_backtracks");
    else throw InvalidArgument(fmt::format("unknown optimizer key '{}'", k));
  }
  c.validate();
  return c;
}

Json to_json(const SmmConfig& c) {
  return {{"epsilon", c.epsilon},
          {"lambda_over_eps", c.lambda_over_eps},
          {"gamma_t", real_to_json(c.gamma_t)},
          {"gamma_y", real_to_json(c.gamma_y)},
          {"gamma_z", real_to_json(c.gamma_z)},
          {"n_stages", c.n_stages},
          {"warm_start", to_string(c.warm_start)},
          {"opt", to_json(c.opt)}};
}

SmmConfig smm_config_from_json(const Json& j, SmmConfig c) {
  require_object(j, "smm config");
  for (const auto& [k, v] : j.items()) {
    if (k == "epsilon") c.epsilon = real_from_json(v, "epsilon");
    else if (k == "lambda_over_eps") c.lambda_over_eps = real_from_json(v, "lambda_over_eps");
    else if (k == "gamma_t") c.gamma_t = real_from_json(v, "gamma_t");
    else if (k == "gamma_y") c.gamma_y = real_from_json(v, "gamma_y");
    else if (k == "gamma_z") c.gamma_z = real_from_json(v, "gamma_z");
    else if (k == "n_stages") c.n_stages = get_as<int>(v, "n_stages");
    else if (k == "warm_start") c.warm_start = parse_warm_start(get_as<std::string>(v, "warm_start"));
    else if (k == "opt") c.opt = optimizer_from_json(v, c.opt);
    else throw InvalidArgument(fmt::format("unknown smm key '{}'", k));
  }
  c.validate();
  return c;
}

Json to_json(const VmmConfig& c) {
  return {{"lambda", c.lambda}, {"n_stages", c.n_stages}, {"warm_start", to_string(c.warm_start)},
          {"opt", to_json(c.opt)}};
}

VmmConfig vmm_config_from_json(const Json& j, VmmConfig c) {
  require_object(j, "vmm config");
  for (const auto& [k, v] : j.items()) {
    if (k == "lambda") c.lambda = real_from_json(v, "lambda");
    else if (k == "n_stages") c.n_stages = get_as<int>(v, "n_stages");
    else if (k == "warm_start") c.warm_start = parse_warm_start(get_as<std::string>(v, "warm_start"));
    else if (k == "opt") c.opt = optimizer_from_json(v, c.opt);
    else throw InvalidArgument(fmt::format("unknown vmm key '{}'", k));
  }
  c.validate();
  return c;
}

Json to_json(const GridSpec& g) {
  return {{"eps_values", g.eps_values},
          {"lambda_over_eps_values", g.lambda_over_eps_values},
          {"vmm_lambda_values", g.vmm_lambda_values}};
}

GridSpec grid_from_json(const Json& j, GridSpec g) {
  require_object(j, "grid");
  for (const auto& [k, v] : j.items()) {
    if (k == "eps_values") g.eps_values = reals_from_json(v, "eps_values");
    else if (k == "lambda_over_eps_values") g.lambda_over_eps_values = reals_from_json(v, "lambda_over_eps_values");
    else if (k == "vmm_lambda_values") g.vmm_lambda_values = reals_from_json(v, "vmm_lambda_values");
    else throw InvalidArgument(fmt::format("unknown grid key '{}'", k));
  }
  g.validate();
  return g;
}

Json to_json(const FitResult& fit, const ParamModel& model, const Json& config_echo) {
  Json j;
  j["method"] = to_string(fit.method);
  j["theta"] = std::vector<double>(fit.theta_hat.data(), fit.theta_hat.data() + fit.theta_hat.size());
  j["stage_objectives"] = fit.stage_objectives;
  j["iterations_per_stage"] = fit.iterations_per_stage;
  Json status = Json::array();
  for (auto s : fit.stage_status) status.push_back(to_string(s));
  j["stage_status"] = status;
  j["cond_estimate"] = real_to_json(fit.cond_estimate);
  j["jitter"] = fit.jitter;
  j["model"] = to_json(model.with_theta(fit.theta_hat));
  j["config"] = config_echo;
  return j;
}

Json to_json(const ExperimentConfig& c) {
  Json methods = Json::array();
  for (Method m : c.methods) methods.push_back(to_string(m));
  Json variants = Json::array();
  for (NetworkVariant v : c.variants) variants.push_back(to_string(v));
  return {{"experiment", to_string(c.experiment)},
          {"n_train", c.n_train},
          {"n_replicates", c.n_replicates},
          {"base_seed", c.base_seed},
          {"methods", methods},
          {"grid", to_json(c.grid)},
          {"smm", to_json(c.selection.smm)},
          {"vmm", to_json(c.selection.vmm)},
          {"opt", to_json(c.selection.opt)},
          {"train_bandwidth", to_string(c.selection.train_bandwidth)},
          {"valid_bandwidth", to_string(c.selection.valid_bandwidth)},
          {"output_dir", c.output_dir},
          {"threads", c.threads},
          {"n_eval", c.n_eval},
          {"corruption_fractions", c.corruption_fractions},
          {"variants", variants},
          {"rate_sizes", c.rate_sizes},
          {"attack_eps_grid", c.attack.eps_grid},
          {"attack_loss", to_string(c.attack.loss)},
          {"duality_sizes", c.duality_sizes},
          {"duality_instances", c.duality_instances},
          {"duality_eps", c.duality_eps},
          {"n_mc", c.n_mc}};
}

ExperimentConfig experiment_config_from_json(const Json& j) {
  require_object(j, "config");
  ExperimentConfig c;
  if (j.contains("experiment")) c = default_config(parse_experiment(get_as<std::string>(j["experiment"], "experiment")));
  for (const auto& [k, v] : j.items()) {
    if (k == "experiment") continue;
    if (k == "n_train") c.n_train = get_as<Eigen::Index>(v, "n_train");
    else if (k == "n_replicates") c.n_replicates = get_as<int>(v, "n_replicates");
    else if (k == "base_seed") c.base_seed = get_as<std::uint64_t>(v, "base_seed");
    else if (k == "methods") {
      c.methods.clear();
      for (const auto& m : get_as<std::vector<std::string>>(v, "methods")) c.methods.push_back(parse_method(m));
    } else if (k == "grid") c.grid = grid_from_json(v, c.grid);
    else if (k == "smm") c.selection.smm = smm_config_from_json(v, c.selection.smm);
    else if (k == "vmm") c.selection.vmm = vmm_config_from_json(v, c.selection.vmm);
    else if (k == "opt") c.selection.opt = optimizer_from_json(v, c.selection.opt);
    else if (k == "train_bandwidth") c.selection.train_bandwidth = parse_bandwidth_rule(get_as<std::string>(v, k.c_str()));
    else if (k == "valid_bandwidth") c.selection.valid_bandwidth = parse_bandwidth_rule(get_as<std::string>(v, k.c_str()));
    else if (k == "output_dir") c.output_dir = get_as<std::string>(v, "output_dir");
    else if (k == "threads") c.threads = get_as<int>(v, "threads");
    else if (k == "n_eval") c.n_eval = get_as<Eigen::Index>(v, "n_eval");
    else if (k == "corruption_fractions") c.corruption_fractions = reals_from_json(v, "corruption_fractions");
    else if (k == "variants") {
      c.variants.clear();
      for (const auto& s : get_as<std::vector<std::string>>(v, "variants")) c.variants.push_back(parse_network_variant(s));
    } else if (k == "rate_sizes") c.rate_sizes = get_as<std::vector<Eigen::Index>>(v, "rate_sizes");
    else if (k == "attack_eps_grid") c.attack.eps_grid = reals_from_json(v, "attack_eps_grid");
    else if (k == "attack_loss") c.attack.loss = parse_attack_loss(get_as<std::string>(v, "attack_loss"));
    else if (k == "duality_sizes") c.duality_sizes = get_as<std::vector<int>>(v, "duality_sizes");
    else if (k == "duality_instances") c.duality_instances = get_as<int>(v, "duality_instances");
    else if (k == "duality_eps") c.duality_eps = reals_from_json(v, "duality_eps");
    else if (k == "n_mc") c.n_mc = get_as<int>(v, "n_mc");
    else throw InvalidArgument(fmt::format("unknown config key '{}'", k));
  }
  c.validate();
  return c;
}

Json to_json(const ExpansionReport& r) {
  Json pts = Json::array();
  for (const auto& p : r.points)
    pts.push_back({{"eps", p.epsilon},
                   {"mc_value", p.mc_value},
                   {"expansion_value", p.expansion_value},
                   {"mc_stderr", p.mc_stderr},
                   {"residual", p.residual}});
  return {{"points", pts}, {"slope", r.slope}, {"inconclusive", r.inconclusive}};
}

Json to_json(const DualityReport& r) {
  Json oracle = Json::array();
  for (const auto& c : r.oracle)
    oracle.push_back({{"n", c.n},
                      {"instance", c.instance},
                      {"profile", c.profile},
                      {"dense_max", c.dense_max},
                      {"rel_error", c.rel_error},
                      {"saddle_rel_error", c.saddle_rel_error}});
  return {{"oracle", oracle}, {"max_oracle_rel_error", r.max_oracle_rel_error}, {"expansion", to_json(r.expansion)}};
}

std::string records_csv(const ExperimentResult& r) {
  std::ostringstream out;
  out << "setting,x,x2,method,replicate,value,failed,chosen_eps,chosen_lambda_over_eps,chosen_lambda,valid_mmr,note\n";
  for (const auto& rec : r.records) {
    std::string note = rec.note;
    std::replace(note.begin(), note.end(), ',', ';');
    std::replace(note.begin(), note.end(), '\n', ' ');
    out << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", rec.setting, csv_real(rec.x), csv_real(rec.x2),
                       to_string(rec.method), rec.replicate, csv_real(rec.value), rec.failed ? 1 : 0,
                       csv_real(rec.chosen.epsilon), csv_real(rec.chosen.lambda_over_eps),
                       csv_real(rec.chosen.lambda), csv_real(rec.chosen.valid_mmr), note);
  }
  return out.str();
}

std::string aggregates_csv(const ExperimentResult& r) {
  std::ostringstream out;
  out << "setting,x,x2,method,mean,stderr,median,count,failures\n";
  for (const auto& a : r.aggregates)
    out << fmt::format("{},{},{},{},{},{},{},{},{}\n", a.setting, csv_real(a.x), csv_real(a.x2), to_string(a.method),
                       csv_real(a.mean), csv_real(a.std_error), csv_real(a.median), a.count, a.failures);
  return out.str();
}

std::string score_table_csv(const SelectionResult& s) {
  std::ostringstream out;
  out << "eps,lambda_over_eps,lambda,valid_mmr,train_objective\n";
  for (const auto& row : s.table)
    out << fmt::format("{},{},{},{},{}\n", csv_real(row.epsilon), csv_real(row.lambda_over_eps), csv_real(row.lambda),
                       csv_real(row.valid_mmr), csv_real(row.train_objective));
  return out.str();
}

std::string sweep_csv(const std::vector<SweepRow>& rows, Method method) {
  std::ostringstream out;
  out << "eps,mse,stderr,method\n";
  for (const auto& r : rows) out << fmt::format("{},{},{},{}\n", r.eps, r.mse, r.std_error, to_string(method));
  return out.str();
}

Json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument(fmt::format("cannot open '{}'", path.string()));
  try {
    return Json::parse(in);
  } catch (const Json::exception& e) {
    throw ParseError(fmt::format("{}: {}", path.string(), e.what()), 0);
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument(fmt::format("cannot open '{}' for writing", path.string()));
  out << text;
}

}  // namespace smm
