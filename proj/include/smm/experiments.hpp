#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "smm/attacks.hpp"
#include "smm/data.hpp"
#include "smm/duality.hpp"
#include "smm/estimators.hpp"
#include "smm/selection.hpp"

namespace smm {

enum class Experiment { corruption_sweep, adversarial_sweep, network_iv, rate_test, duality_check, hparam_sensitivity };
std::string to_string(Experiment e);
Experiment parse_experiment(std::string_view name);

struct ExperimentConfig {
  Experiment experiment = Experiment::corruption_sweep;
  Eigen::Index n_train = 1000;
  int n_replicates = 20;
  std::uint64_t base_seed = 0;
  std::vector<Method> methods{Method::lsq, Method::mmr, Method::vmm, Method::smm};
  GridSpec grid;
  SelectionOptions selection;
  std::string output_dir = "results";
  int threads = 1;

  Eigen::Index n_eval = 10000;
  std::vector<double> corruption_fractions{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  std::vector<NetworkVariant> variants{NetworkVariant::sin, NetworkVariant::abs, NetworkVariant::step,
                                       NetworkVariant::linear};
  std::vector<Eigen::Index> rate_sizes{250, 500, 1000, 2000, 4000};
  AttackConfig attack;
  std::vector<int> duality_sizes{5, 10, 20};
  int duality_instances = 50;
  std::vector<double> duality_eps{1e-2, 3e-3, 1e-3};
  int n_mc = 50000;

  void validate() const;
};

/// Defaults for a named experiment (methods, sizes) before any user overrides.
ExperimentConfig default_config(Experiment e);

/// One (setting, method, replicate) outcome. `x` and `x2` hold the numeric setting
/// (corruption fraction, attack eps, sample size, grid cell); `value` is the
/// prediction error, or the parameter error for the rate test.
struct ReplicateRecord {
  std::string setting;
  double x = std::numeric_limits<double>::quiet_NaN();
  double x2 = std::numeric_limits<double>::quiet_NaN();
  Method method = Method::smm;
  int replicate = 0;
  double value = std::numeric_limits<double>::quiet_NaN();
  bool failed = false;
  std::string note;
  ScoreRow chosen;
};

struct AggregateRecord {
  std::string setting;
  double x = std::numeric_limits<double>::quiet_NaN();
  double x2 = std::numeric_limits<double>::quiet_NaN();
  Method method = Method::smm;
  double mean = std::numeric_limits<double>::quiet_NaN();
  double median = std::numeric_limits<double>::quiet_NaN();
  double std_error = std::numeric_limits<double>::quiet_NaN();  // sample sd / sqrt(count)
  int count = 0;
  int failures = 0;
};

struct DualityInstanceCheck {
  int n = 0;
  int instance = 0;
  double profile = 0.0;
  double dense_max = 0.0;  // eps times the dense concave maximum
  double rel_error = 0.0;
  double saddle_rel_error = 0.0;  // saddle objective at alpha* against profile / eps
};

struct DualityReport {
  std::vector<DualityInstanceCheck> oracle;
  double max_oracle_rel_error = 0.0;
  ExpansionReport expansion;
};

struct ExperimentResult {
  Experiment experiment = Experiment::corruption_sweep;
  std::vector<ReplicateRecord> records;
  std::vector<AggregateRecord> aggregates;
  double rate_slope = std::numeric_limits<double>::quiet_NaN();  // rate_test only
  DualityReport duality;                                          // duality_check only
};

/// Group records by (setting, x, x2, method) in first-seen order; failed rows are counted
/// but excluded from the statistics.
std::vector<AggregateRecord> aggregate(const std::vector<ReplicateRecord>& records);

/// Least-squares slope of log(y) against log(x).
double log_log_slope(const std::vector<double>& x, const std::vector<double>& y);

ExperimentResult run_corruption_sweep(const ExperimentConfig& cfg);
ExperimentResult run_adversarial_sweep(const ExperimentConfig& cfg);
ExperimentResult run_network_iv(const ExperimentConfig& cfg);
ExperimentResult run_rate_test(const ExperimentConfig& cfg);
ExperimentResult run_duality_check(const ExperimentConfig& cfg);
ExperimentResult run_hparam_sensitivity(const ExperimentConfig& cfg);
ExperimentResult run_experiment(const ExperimentConfig& cfg);

/// A smooth quadratic-model instance for checking the small-eps expansion: n rows,
/// strictly positive instrument expansion, strong curvature in t.
struct ExpansionInstance {
  Dataset data;
  ParamModel model;
  InstrumentExpansion h;
  TransportCost cost;
};
ExpansionInstance expansion_instance(Eigen::Index n, std::uint64_t seed);

/// Random Kernel-SMM instance with a quadratic model for the closed-form check.
struct ProfileInstance {
  Dataset data;
  ParamModel model;
  Eigen::VectorXd theta_tilde;
  GramBundle gram;
  SmmConfig cfg;
};
ProfileInstance profile_instance(Eigen::Index n, std::uint64_t seed);

/// eps * max_alpha [ (1/n) a^T L psi_delta - 1/2 a^T (eps Q + lambda L) a ] by a dense
/// LDLT solve of the first-order condition.
double dense_saddle_max(const ProfileInstance& inst);

}  // namespace smm
