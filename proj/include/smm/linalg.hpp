#pragma once

#include <vector>

#include <Eigen/Dense>

namespace smm {

/// Pivoted (partial) Cholesky factor K ~= F F^T of a PSD matrix, F is n x r.
/// Stops once the largest remaining diagonal entry drops below `tol`.
struct LowRankFactor {
  Eigen::MatrixXd F;
  std::vector<Eigen::Index> pivots;
  double residual_trace = 0.0;  // trace(K - F F^T)
};

LowRankFactor pivoted_cholesky(const Eigen::MatrixXd& K, double tol = 1e-12);

/// Jitter levels, as multiples of trace/r, tried in order when a reduced system
/// is not certified positive definite.
inline constexpr double kJitterLevels[] = {1e-10, 1e-8, 1e-6};
/// Smallest admissible eigenvalue ratio for a certified positive definite system.
inline constexpr double kCertifyRatio = 1e-13;

/// The weighted kernel quadratic form
///     q(v) = 1/(2 n^2) v^T L (L diag(g) L / n + ridge L)^{-1} L v
/// evaluated through a factor L = F F^T. With B = F^T diag(g) F / n this is
///     q(v) = 1/(2 n^2) u^T (B + ridge I)^{-1} u,   u = F^T v,
/// which coincides with the n x n expression when F is square and invertible and
/// with its pseudo-inverse version otherwise.
class WeightedKernelProfile {
 public:
  WeightedKernelProfile(const Eigen::MatrixXd& F, const Eigen::VectorXd& g, double ridge);

  double value(const Eigen::VectorXd& v) const;
  /// dq/dv = 1/n^2 F (B + ridge I)^{-1} F^T v.
  Eigen::VectorXd weights(const Eigen::VectorXd& v) const;
  /// Value and gradient in one pass.
  double value_and_weights(const Eigen::VectorXd& v, Eigen::VectorXd& w) const;
  /// Maximizer a* of (1/n) a^T L v - 1/2 a^T (L diag(g) L / n + ridge L) a within range(F).
  Eigen::VectorXd dual_coefficients(const Eigen::VectorXd& v) const;
  /// Columnwise map with value(v) = 1/2 ||whiten(v)||^2.
  Eigen::MatrixXd whiten(const Eigen::MatrixXd& X) const;

  double cond_estimate() const { return cond_; }
  double jitter() const { return jitter_; }
  Eigen::Index rank() const { return eigvals_.size(); }

 private:
  Eigen::VectorXd solve_reduced(const Eigen::VectorXd& u) const;

  Eigen::MatrixXd F_;
  Eigen::Index n_;
  Eigen::MatrixXd eigvecs_;
  Eigen::VectorXd eigvals_;  // of B + ridge I + jitter I
  double cond_ = 1.0;
  double jitter_ = 0.0;
};

}  // namespace smm
