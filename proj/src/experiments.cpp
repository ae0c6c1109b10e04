#include "smm/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <thread>
#include <tuple>

#include <fmt/format.h>

#include "smm/error.hpp"
#include "smm/random.hpp"

namespace smm {

std::string to_string(Experiment e) {
  switch (e) {
    case Experiment::corruption_sweep:
      return "corruption_sweep";
    case Experiment::adversarial_sweep:
      return "adversarial_sweep";
    case Experiment::network_iv:
      return "network_iv";
    case Experiment::rate_test:
      return "rate_test";
    case Experiment::duality_check:
      return "duality_check";
    case Experiment::hparam_sensitivity:
      return "hparam_sensitivity";
  }
  return "unknown";
}

Experiment parse_experiment(std::string_view name) {
  for (Experiment e : {Experiment::corruption_sweep, Experiment::adversarial_sweep, Experiment::network_iv,
                       Experiment::rate_test, Experiment::duality_check, Experiment::hparam_sensitivity})
    if (name == to_string(e)) return e;
  throw InvalidArgument(fmt::format("unknown experiment '{}'", name));
}

void ExperimentConfig::validate() const {
  if (n_train < 2) throw InvalidArgument("n_train must be at least 2");
  if (n_replicates < 1) throw InvalidArgument("n_replicates must be at least 1");
  if (methods.empty()) throw InvalidArgument("methods must be nonempty");
  if (n_eval < 1) throw InvalidArgument("n_eval must be at least 1");
  if (threads < 1) throw InvalidArgument("threads must be at least 1");
  grid.validate();
  for (double f : corruption_fractions)
    if (!(f >= 0.0 && f <= 1.0)) throw InvalidArgument("corruption fractions must lie in [0, 1]");
  for (Eigen::Index n : rate_sizes)
    if (n < 2) throw InvalidArgument("rate-test sizes must be at least 2");
  if (experiment == Experiment::rate_test && rate_sizes.size() < 2)
    throw InvalidArgument("rate test needs at least two sample sizes");
  attack.validate();
  if (duality_sizes.empty() || duality_instances < 1) throw InvalidArgument("duality check needs instances");
  for (int n : duality_sizes)
    if (n < 2) throw InvalidArgument("duality instance sizes must be at least 2");
  selection.smm.validate();
  selection.vmm.validate();
  selection.opt.validate();
}

ExperimentConfig default_config(Experiment e) {
  ExperimentConfig cfg;
  cfg.experiment = e;
  if (e == Experiment::rate_test || e == Experiment::hparam_sensitivity || e == Experiment::duality_check)
    cfg.methods = {Method::smm};
  return cfg;
}

// ---------------------------------------------------------------------------

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Runs fn(0..count-1) on `threads` workers; the first exception is rethrown.
void parallel_for(int count, int threads, const std::function<void(int)>& fn) {
  if (threads <= 1 || count <= 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::exception_ptr first;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int w = 0; w < std::min(threads, count); ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!first) first = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

std::uint64_t replicate_seed(const ExperimentConfig& cfg, int r) { return cfg.base_seed + static_cast<std::uint64_t>(r); }

struct Splits {
  Dataset train, valid, eval;
  ScenarioParams params;
};

Splits make_splits(const std::pair<Dataset, ScenarioParams>& gen, Eigen::Index n, Eigen::Index n_eval,
                   std::uint64_t seed) {
  const ScenarioParams& p = gen.second;
  return {gen.first, sample_scenario(p, n, derive_seed(seed, streams::validation)),
          sample_scenario(p, n_eval, derive_seed(seed, streams::evaluation)), p};
}

struct MethodOutcome {
  Method method;
  std::optional<SelectionResult> sel;
  std::string error;
};

/// Selects and fits every method on one training set, sharing the least-squares
/// first stage across methods.
std::vector<MethodOutcome> fit_methods(const ExperimentConfig& cfg, const Dataset& train, const Dataset& valid,
                                       const ParamModel& init) {
  std::optional<Eigen::VectorXd> first;
  try {
    first = fit_lsq(train, init, cfg.selection.opt).theta_hat;
  } catch (const Error&) {
  }
  std::vector<MethodOutcome> out;
  for (Method m : cfg.methods) {
    MethodOutcome o{m, std::nullopt, {}};
    try {
      o.sel = select_and_fit(train, valid, m, init, cfg.grid, cfg.selection, first);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::invalid_argument || e.kind() == ErrorKind::unsupported) throw;
      o.error = e.what();
    }
    out.push_back(std::move(o));
  }
  return out;
}

ReplicateRecord make_record(std::string setting, double x, double x2, const MethodOutcome& o, int r) {
  ReplicateRecord rec;
  rec.setting = std::move(setting);
  rec.x = x;
  rec.x2 = x2;
  rec.method = o.method;
  rec.replicate = r;
  if (!o.sel) {
    rec.failed = true;
    rec.note = o.error;
  } else {
    rec.chosen = o.sel->chosen;
    if (!o.sel->warnings.empty()) rec.note = fmt::format("{} grid warnings", o.sel->warnings.size());
  }
  return rec;
}

ParamModel quadratic_init() { return ParamModel::quadratic(); }

/// Jobs write into a pre-sized slot vector so collation is independent of scheduling.
ExperimentResult collate(Experiment e, std::vector<std::vector<ReplicateRecord>>& slots) {
  ExperimentResult res;
  res.experiment = e;
  for (auto& s : slots)
    for (auto& r : s) res.records.push_back(std::move(r));
  res.aggregates = aggregate(res.records);
  return res;
}

}  // namespace

std::vector<AggregateRecord> aggregate(const std::vector<ReplicateRecord>& records) {
  using Key = std::tuple<std::string, std::string, std::string, int>;
  std::map<Key, std::size_t> index;
  std::vector<AggregateRecord> out;
  std::vector<std::vector<double>> values;
  for (const auto& r : records) {
    const Key key{r.setting, fmt::format("{}", r.x), fmt::format("{}", r.x2), static_cast<int>(r.method)};
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, out.size()).first;
      AggregateRecord a;
      a.setting = r.setting;
      a.x = r.x;
      a.x2 = r.x2;
      a.method = r.method;
      out.push_back(a);
      values.emplace_back();
    }
    if (r.failed || !std::isfinite(r.value)) {
      ++out[it->second].failures;
    } else {
      values[it->second].push_back(r.value);
    }
  }
  for (std::size_t k = 0; k < out.size(); ++k) {
    auto& v = values[k];
    AggregateRecord& a = out[k];
    a.count = static_cast<int>(v.size());
    if (v.empty()) continue;
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    a.mean = mean;
    if (v.size() > 1) {
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      a.std_error = std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
    } else {
      a.std_error = 0.0;
    }
    std::vector<double> s = v;
    std::sort(s.begin(), s.end());
    const std::size_t m = s.size() / 2;
    a.median = s.size() % 2 == 1 ? s[m] : 0.5 * (s[m - 1] + s[m]);
  }
  return out;
}

double log_log_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw InvalidArgument("slope fit needs at least two paired points");
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    if (!(x[k] > 0.0) || !(y[k] > 0.0)) throw InvalidArgument("log-log slope needs positive values");
    const double lx = std::log(x[k]), ly = std::log(y[k]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const auto m = static_cast<double>(x.size());
  return (m * sxy - sx * sy) / (m * sxx - sx * sx);
}

ExperimentResult run_corruption_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  const int nf = static_cast<int>(cfg.corruption_fractions.size());
  std::vector<std::vector<ReplicateRecord>> slots(static_cast<std::size_t>(cfg.n_replicates * nf));
  parallel_for(cfg.n_replicates * nf, cfg.threads, [&](int job) {
    const int r = job / nf;
    const double frac = cfg.corruption_fractions[static_cast<std::size_t>(job % nf)];
    const std::uint64_t seed = replicate_seed(cfg, r);
    Splits s = make_splits(gen_simple_iv(cfg.n_train, seed), cfg.n_train, cfg.n_eval, seed);
    // The validation split comes from the same corrupted source as the training split.
    const Dataset train = corrupt_covariates(s.train, frac, seed);
    const Dataset valid = corrupt_covariates(s.valid, frac, derive_seed(seed, streams::validation));
    const ParamModel init = quadratic_init();
    auto& out = slots[static_cast<std::size_t>(job)];
    for (const auto& o : fit_methods(cfg, train, valid, init)) {
      ReplicateRecord rec = make_record("fraction", frac, kNaN, o, r);
      if (o.sel) rec.value = prediction_error(init.with_theta(o.sel->fit.theta_hat), s.params, s.eval);
      out.push_back(std::move(rec));
    }
  });
  return collate(Experiment::corruption_sweep, slots);
}

ExperimentResult run_adversarial_sweep(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<std::vector<ReplicateRecord>> slots(static_cast<std::size_t>(cfg.n_replicates));
  parallel_for(cfg.n_replicates, cfg.threads, [&](int r) {
    const std::uint64_t seed = replicate_seed(cfg, r);
    Splits s = make_splits(gen_adversarial_nl(cfg.n_train, seed), cfg.n_train, cfg.n_eval, seed);
    const ParamModel init = ParamModel::mlp(5, {20, 20, 3}).initialized(derive_seed(seed, streams::model_init));
    AttackConfig atk = cfg.attack;
    atk.seed = seed;
    auto& out = slots[static_cast<std::size_t>(r)];
    for (const auto& o : fit_methods(cfg, s.train, s.valid, init)) {
      if (!o.sel) {
        for (double eps : atk.eps_grid) out.push_back(make_record("eps", eps, kNaN, o, r));
        continue;
      }
      const ParamModel fitted = init.with_theta(o.sel->fit.theta_hat);
      for (const SweepRow& row : adversarial_mse_sweep(s.eval, s.params, fitted, atk)) {
        ReplicateRecord rec = make_record("eps", row.eps, kNaN, o, r);
        rec.value = row.mse;
        out.push_back(std::move(rec));
      }
    }
  });
  return collate(Experiment::adversarial_sweep, slots);
}

ExperimentResult run_network_iv(const ExperimentConfig& cfg) {
  cfg.validate();
  const int nv = static_cast<int>(cfg.variants.size());
  std::vector<std::vector<ReplicateRecord>> slots(static_cast<std::size_t>(cfg.n_replicates * nv));
  parallel_for(cfg.n_replicates * nv, cfg.threads, [&](int job) {
    const int v = job / cfg.n_replicates;
    const int r = job % cfg.n_replicates;
    const NetworkVariant variant = cfg.variants[static_cast<std::size_t>(v)];
    const std::uint64_t seed = replicate_seed(cfg, r);
    Splits s = make_splits(gen_network_iv(cfg.n_train, seed, variant), cfg.n_train, cfg.n_eval, seed);
    const ParamModel init = ParamModel::mlp(1, {20, 3}).initialized(derive_seed(seed, streams::model_init));
    auto& out = slots[static_cast<std::size_t>(job)];
    for (const auto& o : fit_methods(cfg, s.train, s.valid, init)) {
      ReplicateRecord rec = make_record(to_string(variant), static_cast<double>(v), kNaN, o, r);
      if (o.sel) rec.value = prediction_error(init.with_theta(o.sel->fit.theta_hat), s.params, s.eval);
      out.push_back(std::move(rec));
    }
  });
  return collate(Experiment::network_iv, slots);
}

ExperimentResult run_rate_test(const ExperimentConfig& cfg) {
  cfg.validate();
  const int ns = static_cast<int>(cfg.rate_sizes.size());
  std::vector<std::vector<ReplicateRecord>> slots(static_cast<std::size_t>(cfg.n_replicates * ns));
  parallel_for(cfg.n_replicates * ns, cfg.threads, [&](int job) {
    const Eigen::Index n = cfg.rate_sizes[static_cast<std::size_t>(job / cfg.n_replicates)];
    const int r = job % cfg.n_replicates;
    const std::uint64_t seed = replicate_seed(cfg, r);
    auto gen = gen_simple_iv(n, seed);
    const Dataset valid = sample_scenario(gen.second, n, derive_seed(seed, streams::validation));
    const ParamModel init = quadratic_init();
    auto& out = slots[static_cast<std::size_t>(job)];
    for (const auto& o : fit_methods(cfg, gen.first, valid, init)) {
      ReplicateRecord rec = make_record("n", static_cast<double>(n), kNaN, o, r);
      if (o.sel) rec.value = (o.sel->fit.theta_hat - gen.second.theta0).norm();
      out.push_back(std::move(rec));
    }
  });
  ExperimentResult res = collate(Experiment::rate_test, slots);
  std::vector<double> xs, ys;
  for (const auto& a : res.aggregates) {
    if (a.method != cfg.methods.front() || a.count == 0) continue;
    xs.push_back(a.x);
    ys.push_back(a.median);
  }
  if (xs.size() >= 2) res.rate_slope = log_log_slope(xs, ys);
  return res;
}

ExperimentResult run_hparam_sensitivity(const ExperimentConfig& cfg) {
  cfg.validate();
  std::vector<std::vector<ReplicateRecord>> slots(static_cast<std::size_t>(cfg.n_replicates));
  parallel_for(cfg.n_replicates, cfg.threads, [&](int r) {
    const std::uint64_t seed = replicate_seed(cfg, r);
    Splits s = make_splits(gen_simple_iv(cfg.n_train, seed), cfg.n_train, cfg.n_eval, seed);
    const ParamModel init = quadratic_init();
    const GramBundle g = gram(s.train.z(), cfg.selection.train_bandwidth);
    const Eigen::VectorXd first = fit_lsq(s.train, init, cfg.selection.opt).theta_hat;
    auto& out = slots[static_cast<std::size_t>(r)];
    for (double eps : cfg.grid.eps_values) {
      for (double ratio : cfg.grid.lambda_over_eps_values) {
        ReplicateRecord rec;
        rec.setting = "cell";
        rec.x = eps;
        rec.x2 = ratio;
        rec.method = Method::smm;
        rec.replicate = r;
        SmmConfig sc = cfg.selection.smm;
        sc.epsilon = eps;
        sc.lambda_over_eps = ratio;
        try {
          const FitResult fit = fit_smm(s.train, init, g, sc, first);
          rec.value = prediction_error(init.with_theta(fit.theta_hat), s.params, s.eval);
        } catch (const Error& e) {
          if (e.kind() == ErrorKind::invalid_argument) throw;
          rec.failed = true;
          rec.note = e.what();
        }
        out.push_back(std::move(rec));
      }
    }
  });
  return collate(Experiment::hparam_sensitivity, slots);
}

// ---------------------------------------------------------------------------

ProfileInstance profile_instance(Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed, streams::train);
  Eigen::MatrixXd z(n, 2), t(n, 1), y(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    z(i, 0) = rng.normal();
    z(i, 1) = rng.normal();
  }
  Eigen::VectorXd theta(3), theta_tilde(3);
  for (int k = 0; k < 3; ++k) theta[k] = rng.uniform(-2.0, 2.0);
  for (int k = 0; k < 3; ++k) theta_tilde[k] = rng.uniform(-2.0, 2.0);
  for (Eigen::Index i = 0; i < n; ++i) {
    t(i, 0) = z(i, 0) + 0.5 * rng.normal();
    y(i, 0) = rng.uniform(-2.0, 2.0) + t(i, 0) * t(i, 0);
  }
  SmmConfig cfg;
  cfg.epsilon = std::pow(10.0, rng.uniform(-3.0, -1.0));
  cfg.lambda_over_eps = std::pow(10.0, rng.uniform(-3.0, 0.0));
  cfg.gamma_t = rng.uniform(0.5, 2.0);
  Dataset ds(std::move(t), std::move(y), std::move(z));
  GramBundle g = gram(ds.z());
  return {std::move(ds), ParamModel::quadratic().with_theta(theta), theta_tilde, std::move(g), cfg};
}

double dense_saddle_max(const ProfileInstance& inst) {
  const auto n = static_cast<double>(inst.data.size());
  const MomentEval me = moment_eval(inst.model, inst.data, false);
  const MomentEval me_tilde = moment_eval(inst.model.with_theta(inst.theta_tilde), inst.data, false);
  const Eigen::MatrixXd& L = inst.gram.L;
  const Eigen::MatrixXd A = inst.cfg.epsilon * q_matrix(me_tilde, inst.gram, inst.cfg) + inst.cfg.lambda() * L;
  const Eigen::VectorXd b = L * psi_delta(me, inst.cfg) / n;
  const Eigen::VectorXd alpha = A.ldlt().solve(b);
  return inst.cfg.epsilon * (b.dot(alpha) - 0.5 * alpha.dot(A * alpha));
}

ExpansionInstance expansion_instance(Eigen::Index n, std::uint64_t seed) {
  Rng rng(seed, streams::train);
  const ParamModel model = ParamModel::quadratic().with_theta(Eigen::Vector3d(-5.0, 1.0, 0.5));
  Eigen::MatrixXd t(n, 1), y(n, 1), z(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    z(i, 0) = rng.uniform(-1.0, 1.0);
    t(i, 0) = 0.8 * z(i, 0) + 0.2 * rng.uniform(-1.0, 1.0);
  }
  const Eigen::VectorXd f = model.values(t);
  for (Eigen::Index i = 0; i < n; ++i) y(i, 0) = f[i] + 0.5 * rng.normal();
  Dataset ds(std::move(t), std::move(y), z);
  InstrumentExpansion h;
  h.anchors = z;
  h.bandwidth_eta = median_heuristic(z);
  // Positive coefficients scaled so that h is about 2 on the data.
  Eigen::VectorXd a(n);
  for (Eigen::Index i = 0; i < n; ++i) a[i] = rng.uniform(0.5, 1.5);
  h.alpha = a;
  const double mean_h = h.values(z).mean();
  h.alpha *= 2.0 / mean_h;
  TransportCost cost;
  cost.gamma_t = 1.0;
  return {std::move(ds), model, std::move(h), cost};
}

ExperimentResult run_duality_check(const ExperimentConfig& cfg) {
  cfg.validate();
  ExperimentResult res;
  res.experiment = Experiment::duality_check;
  DualityReport& rep = res.duality;
  const int sizes = static_cast<int>(cfg.duality_sizes.size());
  for (int k = 0; k < cfg.duality_instances; ++k) {
    const int n = cfg.duality_sizes[static_cast<std::size_t>(k % sizes)];
    const ProfileInstance inst = profile_instance(n, derive_seed(cfg.base_seed, static_cast<std::uint64_t>(k)));
    DualityInstanceCheck c;
    c.n = n;
    c.instance = k;
    c.profile = sinkhorn_profile(inst.data, inst.model, inst.theta_tilde, inst.gram, inst.cfg);
    c.dense_max = dense_saddle_max(inst);
    c.rel_error = std::abs(c.profile - c.dense_max) / std::max(std::abs(c.dense_max), 1e-300);
    const InstrumentExpansion h = optimal_instrument(inst.data, inst.model, inst.theta_tilde, inst.gram, inst.cfg);
    const double saddle = saddle_objective(inst.data, inst.model, inst.theta_tilde, h, inst.cfg);
    const double target = c.profile / inst.cfg.epsilon;
    c.saddle_rel_error = std::abs(saddle - target) / std::max(std::abs(target), 1e-300);
    rep.max_oracle_rel_error = std::max(rep.max_oracle_rel_error, c.rel_error);
    rep.oracle.push_back(c);
  }
  const Eigen::Index n_exp = *std::max_element(cfg.duality_sizes.begin(), cfg.duality_sizes.end());
  const ExpansionInstance inst = expansion_instance(n_exp, cfg.base_seed);
  rep.expansion = verify_expansion_order(inst.data, inst.model, inst.h, cfg.duality_eps, inst.cost, cfg.n_mc,
                                         derive_seed(cfg.base_seed, streams::monte_carlo));
  return res;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  switch (cfg.experiment) {
    case Experiment::corruption_sweep:
      return run_corruption_sweep(cfg);
    case Experiment::adversarial_sweep:
      return run_adversarial_sweep(cfg);
    case Experiment::network_iv:
      return run_network_iv(cfg);
    case Experiment::rate_test:
      return run_rate_test(cfg);
    case Experiment::duality_check:
      return run_duality_check(cfg);
    case Experiment::hparam_sensitivity:
      return run_hparam_sensitivity(cfg);
  }
  throw InvalidArgument("unknown experiment");
}

}  // namespace smm
