#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "smm/data.hpp"
#include "smm/estimators.hpp"
#include "smm/kernels.hpp"
#include "smm/models.hpp"

namespace smm {

struct GridSpec {
  std::vector<double> eps_values{1e-6, 1e-4, 1e-2};
  std::vector<double> lambda_over_eps_values{1e-6, 1e-4, 1e-2, 1.0};
  std::vector<double> vmm_lambda_values{1e-6, 1e-4, 1e-2, 1.0};

  void validate() const;
};

/// Settings shared by every grid point; the grid overrides eps, lambda/eps and lambda.
struct SelectionOptions {
  SmmConfig smm;
  VmmConfig vmm;
  OptimizerConfig opt;  // LSQ and MMR fits
  BandwidthRule train_bandwidth = BandwidthRule::inverse_median;
  BandwidthRule valid_bandwidth = BandwidthRule::inverse_median;
};

/// One scored grid point. eps and lambda_over_eps are NaN where they do not apply;
/// for VMM the regularization weight is reported in `lambda`.
struct ScoreRow {
  double epsilon = 0.0;
  double lambda_over_eps = 0.0;
  double lambda = 0.0;
  double valid_mmr = 0.0;
  double train_objective = 0.0;
};

struct SelectionResult {
  Method method = Method::smm;
  FitResult fit;
  ScoreRow chosen;
  std::vector<ScoreRow> table;
  std::vector<std::string> warnings;
};

/// Fits every grid point of `method` on `train`, scores each fit by the MMR objective
/// on `valid` (Gram bandwidth from the validation instruments) and returns the
/// argmin. Grid points are visited in ascending (eps, lambda/eps) order and only a
/// strictly smaller score replaces the incumbent. A failed fit is skipped with a
/// warning; the call fails only if every grid point fails.
SelectionResult select_and_fit(const Dataset& train, const Dataset& valid, Method method,
                               const ParamModel& model_init, const GridSpec& grid,
                               const SelectionOptions& opts = {},
                               const std::optional<Eigen::VectorXd>& first_stage = std::nullopt);

}  // namespace smm
