#pragma once

#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "smm/data.hpp"
#include "smm/kernels.hpp"
#include "smm/lbfgs.hpp"
#include "smm/linalg.hpp"
#include "smm/models.hpp"

namespace smm {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Method { lsq, mmr, vmm, smm };
std::string to_string(Method m);
Method parse_method(std::string_view name);

/// Where the first-stage parameter comes from: a least-squares fit, or the
/// parameters carried by the initial model.
enum class WarmStart { lsq, init };
std::string to_string(WarmStart w);
WarmStart parse_warm_start(std::string_view name);

struct SmmConfig {
  double epsilon = 1e-2;
  double lambda_over_eps = 1e-2;
  double gamma_t = 1.0;
  double gamma_y = kInf;
  double gamma_z = kInf;
  int n_stages = 2;
  WarmStart warm_start = WarmStart::lsq;
  OptimizerConfig opt;

  double lambda() const { return epsilon * lambda_over_eps; }
  void validate() const;
};

struct VmmConfig {
  double lambda = 1e-2;
  int n_stages = 2;
  WarmStart warm_start = WarmStart::lsq;
  OptimizerConfig opt;

  void validate() const;
};

struct FitResult {
  Method method = Method::smm;
  Eigen::VectorXd theta_hat;
  std::vector<double> stage_objectives;    // final objective of each stage
  std::vector<int> iterations_per_stage;
  std::vector<OptimizerStatus> stage_status;
  std::vector<std::vector<double>> stage_traces;  // accepted-iterate objectives per stage
  double cond_estimate = 1.0;  // largest over stages
  double jitter = 0.0;         // largest over stages
};

// ---------------------------------------------------------------------------
// Kernel-SMM building blocks

/// psi + (eps/2) [ (1/gamma_t) Laplacian_t psi + (1/gamma_y) Laplacian_y psi ]; the
/// y-Laplacian of y - f(t) is identically zero.
Eigen::VectorXd psi_delta(const MomentEval& me, const SmmConfig& cfg);

/// g_k = (1/gamma_t) ||grad_t psi_k||^2 + 1/gamma_y, infinite weights contributing 0.
Eigen::VectorXd gradient_weights(const MomentEval& me_tilde, const SmmConfig& cfg);

/// Q = (1/n) L diag(g) L.
Eigen::MatrixXd q_matrix(const MomentEval& me_tilde, const GramBundle& gram, const SmmConfig& cfg);

/// The Sinkhorn profile R(theta) with Q frozen at theta_tilde and a closed-form
/// gradient. Construction factors the reduced system once.
class SmmObjective {
 public:
  SmmObjective(const Dataset& ds, const ParamModel& model, const Eigen::VectorXd& theta_tilde,
               const GramBundle& gram, const SmmConfig& cfg);

  double value(const Eigen::VectorXd& theta) const;
  double value_and_grad(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const;
  const WeightedKernelProfile& profile() const { return profile_; }

 private:
  const Dataset& ds_;
  ParamModel model_;
  Eigen::VectorXd y_;
  SmmConfig cfg_;
  WeightedKernelProfile profile_;
};

double sinkhorn_profile(const Dataset& ds, const ParamModel& model, const Eigen::VectorXd& theta_tilde,
                        const GramBundle& gram, const SmmConfig& cfg);
Eigen::VectorXd sinkhorn_profile_grad(const Dataset& ds, const ParamModel& model, const Eigen::VectorXd& theta_tilde,
                                      const GramBundle& gram, const SmmConfig& cfg);

/// Multi-stage Kernel-SMM. `first_stage` overrides the warm start (used to share
/// one least-squares fit across a grid).
FitResult fit_smm(const Dataset& ds, const ParamModel& model_init, const GramBundle& gram, const SmmConfig& cfg,
                  const std::optional<Eigen::VectorXd>& first_stage = std::nullopt);
/// As above with the Gram matrix built from ds.z() by the median heuristic.
FitResult fit_smm(const Dataset& ds, const ParamModel& model_init, const SmmConfig& cfg);

// ---------------------------------------------------------------------------
// Baselines

/// (1/n^2) psi^T L psi.
double mmr_objective(const Dataset& ds, const ParamModel& model, const GramBundle& gram);
double mmr_objective(const Eigen::VectorXd& psi, const Eigen::MatrixXd& L);
FitResult fit_mmr(const Dataset& ds, const ParamModel& model_init, const GramBundle& gram,
                  const OptimizerConfig& opt = {});

/// (1/(2n^2)) psi^T L (Q_vmm + lambda L)^{-1} L psi with Q_vmm = (1/n) L diag(psi_tilde^2) L.
double vmm_objective(const Dataset& ds, const ParamModel& model, const Eigen::VectorXd& theta_tilde,
                     const GramBundle& gram, double lambda);
FitResult fit_vmm(const Dataset& ds, const ParamModel& model_init, const GramBundle& gram, const VmmConfig& cfg,
                  const std::optional<Eigen::VectorXd>& first_stage = std::nullopt);

/// Least squares (1/n) sum (y - f)^2. Models linear in theta are solved exactly by
/// column-pivoted QR; others by L-BFGS from the initial parameters.
double lsq_objective(const Dataset& ds, const ParamModel& model);
FitResult fit_lsq(const Dataset& ds, const ParamModel& model_init, const OptimizerConfig& opt = {});

/// E[(f(T; theta) - f0(T))^2] over the rows of an evaluation sample.
double prediction_error(const ParamModel& model, const ScenarioParams& params, const Dataset& eval);

}  // namespace smm
