#include "smm/selection.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>

#include <fmt/format.h>

#include "smm/error.hpp"

namespace smm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void check_values(const std::vector<double>& v, const char* name) {
  if (v.empty()) throw InvalidArgument(fmt::format("grid '{}' is empty", name));
  for (double x : v)
    if (!(x > 0.0) || !std::isfinite(x)) throw InvalidArgument(fmt::format("grid '{}' has a non-positive entry", name));
}

std::vector<double> ascending(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

bool recoverable(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::fit_failure:
    case ErrorKind::ill_conditioned:
    case ErrorKind::numeric:
    case ErrorKind::degenerate_data:
      return true;
    default:
      return false;
  }
}

}  // namespace

void GridSpec::validate() const {
  check_values(eps_values, "eps");
  check_values(lambda_over_eps_values, "lambda_over_eps");
  check_values(vmm_lambda_values, "vmm_lambda");
}

SelectionResult select_and_fit(const Dataset& train, const Dataset& valid, Method method,
                               const ParamModel& model_init, const GridSpec& grid, const SelectionOptions& opts,
                               const std::optional<Eigen::VectorXd>& first_stage) {
  if (method == Method::smm) {
    check_values(grid.eps_values, "eps");
    check_values(grid.lambda_over_eps_values, "lambda_over_eps");
  } else if (method == Method::vmm) {
    check_values(grid.vmm_lambda_values, "vmm_lambda");
  }
  if (valid.dim_t() != train.dim_t() || valid.dim_z() != train.dim_z())
    throw InvalidArgument("training and validation data have different shapes");

  SelectionResult out;
  out.method = method;
  const GramBundle valid_gram = gram(valid.z(), opts.valid_bandwidth);
  auto score = [&](const FitResult& fit) {
    return mmr_objective(valid, model_init.with_theta(fit.theta_hat), valid_gram);
  };

  bool have_best = false;
  auto consider = [&](ScoreRow row, const FitResult& fit) {
    out.table.push_back(row);
    if (!have_best || row.valid_mmr < out.chosen.valid_mmr) {
      have_best = true;
      out.chosen = row;
      out.fit = fit;
    }
  };
  auto attempt = [&](const std::string& label, const std::function<FitResult()>& run) -> std::optional<FitResult> {
    try {
      return run();
    } catch (const Error& e) {
      if (!recoverable(e)) throw;
      out.warnings.push_back(fmt::format("{}: {}", label, e.what()));
      return std::nullopt;
    }
  };

  if (method == Method::lsq) {
    if (auto fit = attempt("lsq", [&] { return fit_lsq(train, model_init, opts.opt); }))
      consider({kNaN, kNaN, kNaN, score(*fit), fit->stage_objectives.back()}, *fit);
  } else {
    const GramBundle train_gram = gram(train.z(), opts.train_bandwidth);
    std::optional<Eigen::VectorXd> start = first_stage;
    const WarmStart warm = method == Method::smm ? opts.smm.warm_start : opts.vmm.warm_start;
    if (!start && (method == Method::mmr || warm == WarmStart::lsq)) {
      if (auto fit = attempt("first stage", [&] { return fit_lsq(train, model_init, opts.opt); }))
        start = fit->theta_hat;
    }

    if (method == Method::mmr) {
      const ParamModel init = start ? model_init.with_theta(*start) : model_init;
      if (auto fit = attempt("mmr", [&] { return fit_mmr(train, init, train_gram, opts.opt); }))
        consider({kNaN, kNaN, kNaN, score(*fit), fit->stage_objectives.back()}, *fit);
    } else if (method == Method::vmm) {
      for (double lambda : ascending(grid.vmm_lambda_values)) {
        VmmConfig cfg = opts.vmm;
        cfg.lambda = lambda;
        if (auto fit = attempt(fmt::format("vmm lambda={}", lambda),
                               [&] { return fit_vmm(train, model_init, train_gram, cfg, start); }))
          consider({kNaN, kNaN, lambda, score(*fit), fit->stage_objectives.back()}, *fit);
      }
    } else {
      // For piecewise-affine models psi_delta = psi, so the profile depends on
      // (eps, lambda/eps) only through lambda/eps and one fit serves every eps.
      std::map<double, std::optional<FitResult>> by_ratio;
      for (double eps : ascending(grid.eps_values)) {
        for (double ratio : ascending(grid.lambda_over_eps_values)) {
          SmmConfig cfg = opts.smm;
          cfg.epsilon = eps;
          cfg.lambda_over_eps = ratio;
          std::optional<FitResult> fit;
          const auto cached = by_ratio.find(ratio);
          if (model_init.piecewise_affine() && cached != by_ratio.end()) {
            fit = cached->second;
          } else {
            fit = attempt(fmt::format("smm eps={} lambda/eps={}", eps, ratio),
                          [&] { return fit_smm(train, model_init, train_gram, cfg, start); });
            if (model_init.piecewise_affine()) by_ratio[ratio] = fit;
          }
          if (fit) consider({eps, ratio, eps * ratio, score(*fit), fit->stage_objectives.back()}, *fit);
        }
      }
    }
  }
  if (!have_best) throw FitError(fmt::format("every {} grid point failed", to_string(method)), {});
  return out;
}

}  // namespace smm
