#include "smm/attacks.hpp"

#include <cmath>

#include <fmt/format.h>

#include "smm/error.hpp"

namespace smm {

std::string to_string(AttackLoss) { return "residual_sq"; }

AttackLoss parse_attack_loss(std::string_view name) {
  if (name == "residual_sq") return AttackLoss::residual_sq;
  throw InvalidArgument(fmt::format("unknown attack loss '{}'", name));
}

void AttackConfig::validate() const {
  if (eps_grid.empty()) throw InvalidArgument("attack grid is empty");
  for (std::size_t k = 0; k < eps_grid.size(); ++k) {
    if (!(eps_grid[k] >= 0.0) || !std::isfinite(eps_grid[k]))
      throw InvalidArgument("attack strengths must be finite and nonnegative");
    if (k > 0 && eps_grid[k] < eps_grid[k - 1]) throw InvalidArgument("attack grid must be sorted ascending");
  }
}

Dataset fgsm_perturb(const Dataset& ds, const ParamModel& model, double eps, AttackLoss) {
  if (!(eps >= 0.0) || !std::isfinite(eps)) throw InvalidArgument("attack strength must be finite and nonnegative");
  if (eps == 0.0) return ds;
  const Eigen::VectorXd resid = model.values(ds.t()) - ds.outcome();
  const Eigen::MatrixXd grad = model.input_grads(ds.t());
  Eigen::MatrixXd t = ds.t();
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    for (Eigen::Index c = 0; c < t.cols(); ++c) {
      const double g = 2.0 * resid[i] * grad(i, c);
      const double s = g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0);
      t(i, c) += eps * s;
    }
  }
  return ds.with_t(std::move(t));
}

std::vector<SweepRow> adversarial_mse_sweep(const Dataset& test, const ScenarioParams& params,
                                            const ParamModel& model, const AttackConfig& atk) {
  atk.validate();
  std::vector<SweepRow> out;
  for (double eps : atk.eps_grid) {
    const Dataset adv = fgsm_perturb(test, model, eps, atk.loss);
    const Eigen::ArrayXd sq = (model.values(adv.t()) - true_responses(params, adv.t())).array().square();
    const auto n = static_cast<double>(sq.size());
    SweepRow row;
    row.eps = eps;
    row.mse = sq.mean();
    row.std_error = sq.size() > 1 ? std::sqrt((sq - row.mse).square().sum() / (n - 1.0) / n) : 0.0;
    out.push_back(row);
  }
  return out;
}

}  // namespace smm
