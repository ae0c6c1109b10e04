#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

#include "smm/data.hpp"
#include "smm/estimators.hpp"
#include "smm/models.hpp"

namespace smm {

/// h(z) = sum_i alpha_i k(z_i, z) for an RBF kernel with the given bandwidth.
struct InstrumentExpansion {
  Eigen::VectorXd alpha;
  Eigen::MatrixXd anchors;
  double bandwidth_eta = 1.0;

  Eigen::VectorXd values(const Eigen::MatrixXd& z) const;
  /// Rows are grad_z h at the rows of z.
  Eigen::MatrixXd gradients(const Eigen::MatrixXd& z) const;
  Eigen::VectorXd laplacians(const Eigen::MatrixXd& z) const;
  /// ||h||^2 in the RKHS, alpha^T K alpha.
  double rkhs_norm_sq() const;
};

/// Per-block transport weights; infinity fixes the block.
struct TransportCost {
  double gamma_t = 1.0;
  double gamma_y = kInf;
  double gamma_z = kInf;

  void validate() const;
};

/// M(f, h) - eps * R(f_tilde, h) for a finite kernel expansion h:
///   M = mean_i (I + eps/2 Laplacian_xi)[psi h](xi_i)
///   R = 1/2 mean_i ||grad_xi [psi_tilde h](xi_i)||^2_Gamma + lambda/(2 eps) ||h||^2.
double saddle_objective(const Dataset& ds, const ParamModel& model, const Eigen::VectorXd& theta_tilde,
                        const InstrumentExpansion& h, const SmmConfig& cfg);

/// The maximizer alpha* = (eps Q + lambda L)^{-1} (1/n) L psi_delta, anchored at ds.z().
InstrumentExpansion optimal_instrument(const Dataset& ds, const ParamModel& model,
                                       const Eigen::VectorXd& theta_tilde, const GramBundle& gram,
                                       const SmmConfig& cfg);

struct McEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

/// Monte-Carlo evaluation of the Gaussian-smoothed dual, reported on the same scale
/// as its small-eps expansion:
///   mean_i [ -log E_{delta ~ N(0, eps Gamma^{-1})} exp(-Psi(xi_i + delta)) ],
/// with Psi(xi) = psi(t, y) h(z). Only finite-gamma blocks are perturbed. Draws come
/// in antithetic pairs and the standard normal draws depend on the seed only, so
/// estimates at different eps share random numbers.
McEstimate mc_dual_estimate(const Dataset& ds, const ParamModel& model, const InstrumentExpansion& h,
                            double epsilon, const TransportCost& cost, int n_mc, std::uint64_t seed);

/// mean Psi + eps/2 mean Laplacian_Gamma Psi - eps/2 mean ||grad Psi||^2_Gamma.
double expansion_value(const Dataset& ds, const ParamModel& model, const InstrumentExpansion& h, double epsilon,
                       const TransportCost& cost);

struct ExpansionPoint {
  double epsilon = 0.0;
  double mc_value = 0.0;
  double expansion_value = 0.0;
  double mc_stderr = 0.0;
  double residual = 0.0;  // mc_value - expansion_value
};

struct ExpansionReport {
  std::vector<ExpansionPoint> points;
  double slope = 0.0;         // least-squares slope of log|residual| against log eps
  bool inconclusive = false;  // some |residual| below 3 MC standard errors
};

/// The expansion is affine in eps, so subtracting it removes the affine-in-eps part
/// of the dual and leaves the remainder whose order is fitted.
ExpansionReport verify_expansion_order(const Dataset& ds, const ParamModel& model, const InstrumentExpansion& h,
                                       const std::vector<double>& eps_grid, const TransportCost& cost, int n_mc,
                                       std::uint64_t seed);

}  // namespace smm
