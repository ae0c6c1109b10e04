#pragma once

#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace smm {

struct OptimizerConfig {
  int memory = 10;
  double grad_tol = 1e-6;
  int max_iters = 500;
  double armijo = 1e-4;
  double shrink = 0.5;
  int max_backtracks = 60;

  void validate() const;
};

enum class OptimizerStatus { converged, max_iters, line_search_failed, non_finite };
std::string to_string(OptimizerStatus s);

struct OptimizerResult {
  Eigen::VectorXd theta;
  double value = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  int evaluations = 0;
  OptimizerStatus status = OptimizerStatus::converged;
  std::vector<double> trace;  // objective at the start point and at every accepted iterate
};

/// Returns f(x) and writes the gradient into `grad`.
using Objective = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

/// Limited-memory BFGS: two-loop recursion over the last `memory` curvature pairs and
/// a backtracking Armijo line search. Curvature pairs with s^T y <= 0 are skipped;
/// non-descent directions fall back to steepest descent with the memory cleared.
/// A non-finite objective at a trial point counts as a failed Armijo test. A
/// non-finite start value or gradient stops the run with status non_finite and the
/// best point seen so far.
OptimizerResult lbfgs_minimize(const Objective& f, Eigen::VectorXd x0, const OptimizerConfig& cfg = {});

}  // namespace smm
