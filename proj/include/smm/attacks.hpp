#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "smm/data.hpp"
#include "smm/models.hpp"

namespace smm {

/// Per-row loss whose t-gradient sign drives the attack.
enum class AttackLoss { residual_sq };
std::string to_string(AttackLoss l);
AttackLoss parse_attack_loss(std::string_view name);

struct AttackConfig {
  std::vector<double> eps_grid{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  AttackLoss loss = AttackLoss::residual_sq;
  std::uint64_t seed = 0;

  void validate() const;
};

/// t_adv = t + eps * sign(grad_t (f(t) - y)^2), sign(0) = 0; y and z untouched.
Dataset fgsm_perturb(const Dataset& ds, const ParamModel& model, double eps,
                     AttackLoss loss = AttackLoss::residual_sq);

struct SweepRow {
  double eps = 0.0;
  double mse = 0.0;
  double std_error = 0.0;  // over test rows
};

/// Mean of (f(t_adv) - f0(t_adv))^2 over the test rows at every grid point.
std::vector<SweepRow> adversarial_mse_sweep(const Dataset& test, const ScenarioParams& params,
                                            const ParamModel& model, const AttackConfig& atk);

}  // namespace smm
