#include "smm/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include <fmt/format.h>

#include "smm/error.hpp"

namespace smm {

std::string to_string(Method m) {
  switch (m) {
    case Method::lsq:
      return "lsq";
    case Method::mmr:
      return "mmr";
    case Method::vmm:
      return "vmm";
    case Method::smm:
      return "smm";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  if (name == "lsq") return Method::lsq;
  if (name == "mmr") return Method::mmr;
  if (name == "vmm") return Method::vmm;
  if (name == "smm") return Method::smm;
  throw InvalidArgument(fmt::format("unknown method '{}'", name));
}

std::string to_string(WarmStart w) { return w == WarmStart::lsq ? "lsq" : "init"; }

WarmStart parse_warm_start(std::string_view name) {
  if (name == "lsq") return WarmStart::lsq;
  if (name == "init") return WarmStart::init;
  throw InvalidArgument(fmt::format("unknown warm start '{}'", name));
}

namespace {

bool positive_or_inf(double g) { return g > 0.0 && !std::isnan(g); }

// eps / (2 gamma_t), the coefficient of the t-Laplacian of f inside psi_delta.
double laplacian_coef(const SmmConfig& cfg) { return std::isinf(cfg.gamma_t) ? 0.0 : cfg.epsilon / (2.0 * cfg.gamma_t); }

void check_gram(const Dataset& ds, const GramBundle& gram) {
  if (gram.L.rows() != ds.size() || gram.factor.F.rows() != ds.size())
    throw InvalidArgument(fmt::format("Gram matrix has {} rows, dataset has {}", gram.L.rows(), ds.size()));
}

void record_stage(FitResult& out, const OptimizerResult& res, const WeightedKernelProfile* profile) {
  out.stage_objectives.push_back(res.value);
  out.iterations_per_stage.push_back(res.iterations);
  out.stage_status.push_back(res.status);
  out.stage_traces.push_back(res.trace);
  if (profile != nullptr) {
    out.cond_estimate = std::max(out.cond_estimate, profile->cond_estimate());
    out.jitter = std::max(out.jitter, profile->jitter());
  }
}

void throw_if_diverged(const OptimizerResult& res, Method m, int stage) {
  if (res.status == OptimizerStatus::non_finite)
    throw FitError(fmt::format("{} stage {}: objective or gradient became non-finite", to_string(m), stage + 1),
                   res.trace);
}

Eigen::VectorXd first_stage_theta(const Dataset& ds, const ParamModel& model_init, WarmStart warm,
                                  const OptimizerConfig& opt, const std::optional<Eigen::VectorXd>& given) {
  if (given) {
    if (given->size() != model_init.num_params()) throw InvalidArgument("first-stage parameter has wrong length");
    return *given;
  }
  if (warm == WarmStart::init) return model_init.theta();
  return fit_lsq(ds, model_init, opt).theta_hat;
}

// With the weights frozen, a model that is linear in theta makes the stage objective an
// exact quadratic 1/2 ||W (b - A theta)||^2. One least-squares solve then replaces the
// optimizer's stopping tolerance with rounding error.
void polish_quadratic(const Eigen::MatrixXd& Wb, const Eigen::MatrixXd& WA,
                      const std::function<double(const Eigen::VectorXd&)>& objective, OptimizerResult& res) {
  const Eigen::VectorXd theta = Eigen::ColPivHouseholderQR<Eigen::MatrixXd>(WA).solve(Wb.col(0));
  if (!theta.allFinite()) return;
  const double v = objective(theta);
  // rounding can leave the exact minimizer a few ulps above the optimizer's last iterate
  if (!(v <= res.value + 1e-12 * std::abs(res.value))) return;
  if (v < res.value) res.trace.push_back(v);
  res.theta = theta;
  res.value = v;
  res.status = OptimizerStatus::converged;
}

}  // namespace

void SmmConfig::validate() const {
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw InvalidArgument("epsilon must be positive and finite");
  if (!(lambda_over_eps >= 0.0) || !std::isfinite(lambda_over_eps))
    throw InvalidArgument("lambda/epsilon must be nonnegative and finite");
  if (!positive_or_inf(gamma_t) || !positive_or_inf(gamma_y) || !positive_or_inf(gamma_z))
    throw InvalidArgument("transport weights must be positive or infinite");
  if (!std::isinf(gamma_z)) throw Unsupported("Kernel-SMM requires gamma_z = infinity");
  if (n_stages < 1) throw InvalidArgument("n_stages must be at least 1");
  opt.validate();
}

void VmmConfig::validate() const {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) throw InvalidArgument("VMM lambda must be positive and finite");
  if (n_stages < 1) throw InvalidArgument("n_stages must be at least 1");
  opt.validate();
}

Eigen::VectorXd psi_delta(const MomentEval& me, const SmmConfig& cfg) {
  if (std::isinf(cfg.gamma_t)) return me.psi;
  return me.psi + (cfg.epsilon / (2.0 * cfg.gamma_t)) * me.laplacian_t_psi;
}

Eigen::VectorXd gradient_weights(const MomentEval& me_tilde, const SmmConfig& cfg) {
  const Eigen::Index n = me_tilde.psi.size();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
  if (!std::isinf(cfg.gamma_t)) g += me_tilde.grad_t_psi.rowwise().squaredNorm() / cfg.gamma_t;
  if (!std::isinf(cfg.gamma_y)) g.array() += 1.0 / cfg.gamma_y;
  return g;
}

Eigen::MatrixXd q_matrix(const MomentEval& me_tilde, const GramBundle& gram, const SmmConfig& cfg) {
  const Eigen::VectorXd g = gradient_weights(me_tilde, cfg);
  if (g.size() != gram.L.rows()) throw InvalidArgument("Gram size does not match moment evaluation");
  const auto n = static_cast<double>(g.size());
  Eigen::MatrixXd q = gram.L * g.asDiagonal() * gram.L / n;
  return 0.5 * (q + q.transpose());
}

SmmObjective::SmmObjective(const Dataset& ds, const ParamModel& model, const Eigen::VectorXd& theta_tilde,
                           const GramBundle& gram, const SmmConfig& cfg)
    : ds_(ds),
      model_(model),
      y_(ds.outcome()),
      cfg_(cfg),
      profile_(gram.factor.F,
               gradient_weights(moment_eval(model.with_theta(theta_tilde), ds, false), cfg),
               cfg.lambda_over_eps) {
  cfg.validate();
  check_gram(ds, gram);
}

double SmmObjective::value(const Eigen::VectorXd& theta) const {
  const ParamModel m = model_.with_theta(theta);
  const Eigen::VectorXd pd = y_ - m.values(ds_.t()) - laplacian_coef(cfg_) * m.laplacians(ds_.t());
  return profile_.value(pd);
}

double SmmObjective::value_and_grad(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const {
  const ParamModel m = model_.with_theta(theta);
  const double coef = laplacian_coef(cfg_);
  const Eigen::VectorXd lap = m.laplacians(ds_.t());
  double r = 0.0;
  Eigen::VectorXd w;
  m.values_and_vjp(
      ds_.t(),
      [&](const Eigen::VectorXd& f) {
        r = profile_.value_and_weights(y_ - f - coef * lap, w);
        return w;
      },
      grad);
  grad = -grad;
  if (coef != 0.0 && !m.piecewise_affine()) grad -= coef * w.sum() * m.laplacian_theta_grad();
  return r;
}

double sinkhorn_profile(const Dataset& ds, const ParamModel& model, const Eigen::VectorXd& theta_tilde,
                        const GramBundle& gram, const SmmConfig& cfg) {
  return SmmObjective(ds, model, theta_tilde, gram, cfg).value(model.theta());
}

Eigen::VectorXd sinkhorn_profile_grad(const Dataset& ds, const ParamModel& model, const Eigen::VectorXd& theta_tilde,
                                      const GramBundle& gram, const SmmConfig& cfg) {
  Eigen::VectorXd grad;
  SmmObjective(ds, model, theta_tilde, gram, cfg).value_and_grad(model.theta(), grad);
  return grad;
}

FitResult fit_smm(const Dataset& ds, const ParamModel& model_init, const GramBundle& gram, const SmmConfig& cfg,
                  const std::optional<Eigen::VectorXd>& first_stage) {
  cfg.validate();
  check_gram(ds, gram);
  FitResult out;
  out.method = Method::smm;
  Eigen::VectorXd theta_tilde = first_stage_theta(ds, model_init, cfg.warm_start, cfg.opt, first_stage);
  Eigen::VectorXd theta = theta_tilde;
  for (int s = 0; s < cfg.n_stages; ++s) {
    const SmmObjective obj(ds, model_init, theta_tilde, gram, cfg);
    OptimizerResult res = lbfgs_minimize(
        [&obj](const Eigen::VectorXd& x, Eigen::VectorXd& g) { return obj.value_and_grad(x, g); }, theta, cfg.opt);
    throw_if_diverged(res, Method::smm, s);
    if (model_init.linear_in_theta()) {
      Eigen::MatrixXd A = model_init.jacobian(ds.t());
      const double coef = laplacian_coef(cfg);
      if (coef != 0.0) A.rowwise() += coef * model_init.laplacian_theta_grad().transpose();
      polish_quadratic(obj.profile().whiten(ds.outcome()), obj.profile().whiten(A),
                       [&obj](const Eigen::VectorXd& x) { return obj.value(x); }, res);
    }
    record_stage(out, res, &obj.profile());
    theta = res.theta;
    theta_tilde = theta;
  }
  out.theta_hat = theta;
  return out;
}

FitResult fit_smm(const Dataset& ds, const ParamModel& model_init, const SmmConfig& cfg) {
  return fit_smm(ds, model_init, gram(ds.z()), cfg);
}

// ---------------------------------------------------------------------------

double mmr_objective(const Eigen::VectorXd& psi, const Eigen::MatrixXd& L) {
  if (L.rows() != psi.size() || L.cols() != psi.size()) throw InvalidArgument("MMR: Gram size mismatch");
  const auto n = static_cast<double>(psi.size());
  return psi.dot(L * psi) / (n * n);
}

double mmr_objective(const Dataset& ds, const ParamModel& model, const GramBundle& gram) {
  check_gram(ds, gram);
  return mmr_objective(ds.outcome() - model.values(ds.t()), gram.L);
}

FitResult fit_mmr(const Dataset& ds, const ParamModel& model_init, const GramBundle& gram,
                  const OptimizerConfig& opt) {
  check_gram(ds, gram);
  const Eigen::VectorXd y = ds.outcome();
  const auto n2 = static_cast<double>(ds.size()) * static_cast<double>(ds.size());
  auto f = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
    const ParamModel m = model_init.with_theta(theta);
    double v = 0.0;
    m.values_and_vjp(
        ds.t(),
        [&](const Eigen::VectorXd& fx) {
          const Eigen::VectorXd psi = y - fx;
          const Eigen::VectorXd lpsi = gram.L * psi;
          v = psi.dot(lpsi) / n2;
          return Eigen::VectorXd(-2.0 / n2 * lpsi);
        },
        grad);
    return v;
  };
  OptimizerResult res = lbfgs_minimize(f, model_init.theta(), opt);
  throw_if_diverged(res, Method::mmr, 0);
  if (model_init.linear_in_theta()) {
    const Eigen::MatrixXd& F = gram.factor.F;
    polish_quadratic(F.transpose() * y, F.transpose() * model_init.jacobian(ds.t()),
                     [&](const Eigen::VectorXd& x) { return mmr_objective(ds, model_init.with_theta(x), gram); }, res);
  }
  FitResult out;
  out.method = Method::mmr;
  record_stage(out, res, nullptr);
  out.theta_hat = res.theta;
  return out;
}

namespace {

class VmmObjective {
 public:
  VmmObjective(const Dataset& ds, const ParamModel& model, const Eigen::VectorXd& theta_tilde,
               const GramBundle& gram, double lambda)
      : ds_(ds),
        model_(model),
        y_(ds.outcome()),
        profile_(gram.factor.F, (y_ - model.with_theta(theta_tilde).values(ds.t())).cwiseAbs2(), lambda) {}

  double value(const Eigen::VectorXd& theta) const {
    return profile_.value(y_ - model_.with_theta(theta).values(ds_.t()));
  }

  double value_and_grad(const Eigen::VectorXd& theta, Eigen::VectorXd& grad) const {
    double r = 0.0;
    model_.with_theta(theta).values_and_vjp(
        ds_.t(),
        [&](const Eigen::VectorXd& f) {
          Eigen::VectorXd w;
          r = profile_.value_and_weights(y_ - f, w);
          return Eigen::VectorXd(-w);
        },
        grad);
    return r;
  }

  const WeightedKernelProfile& profile() const { return profile_; }

 private:
  const Dataset& ds_;
  ParamModel model_;
  Eigen::VectorXd y_;
  WeightedKernelProfile profile_;
};

}  // namespace

double vmm_objective(const Dataset& ds, const ParamModel& model, const Eigen::VectorXd& theta_tilde,
                     const GramBundle& gram, double lambda) {
  check_gram(ds, gram);
  if (!(lambda > 0.0)) throw InvalidArgument("VMM lambda must be positive");
  return VmmObjective(ds, model, theta_tilde, gram, lambda).value(model.theta());
}

FitResult fit_vmm(const Dataset& ds, const ParamModel& model_init, const GramBundle& gram, const VmmConfig& cfg,
                  const std::optional<Eigen::VectorXd>& first_stage) {
  cfg.validate();
  check_gram(ds, gram);
  FitResult out;
  out.method = Method::vmm;
  Eigen::VectorXd theta_tilde = first_stage_theta(ds, model_init, cfg.warm_start, cfg.opt, first_stage);
  Eigen::VectorXd theta = theta_tilde;
  for (int s = 0; s < cfg.n_stages; ++s) {
    const VmmObjective obj(ds, model_init, theta_tilde, gram, cfg.lambda);
    OptimizerResult res = lbfgs_minimize(
        [&obj](const Eigen::VectorXd& x, Eigen::VectorXd& g) { return obj.value_and_grad(x, g); }, theta, cfg.opt);
    throw_if_diverged(res, Method::vmm, s);
    if (model_init.linear_in_theta())
      polish_quadratic(obj.profile().whiten(ds.outcome()), obj.profile().whiten(model_init.jacobian(ds.t())),
                       [&obj](const Eigen::VectorXd& x) { return obj.value(x); }, res);
    record_stage(out, res, &obj.profile());
    theta = res.theta;
    theta_tilde = theta;
  }
  out.theta_hat = theta;
  return out;
}

// ---------------------------------------------------------------------------

double lsq_objective(const Dataset& ds, const ParamModel& model) {
  return (ds.outcome() - model.values(ds.t())).squaredNorm() / static_cast<double>(ds.size());
}

FitResult fit_lsq(const Dataset& ds, const ParamModel& model_init, const OptimizerConfig& opt) {
  FitResult out;
  out.method = Method::lsq;
  const Eigen::VectorXd y = ds.outcome();
  const auto n = static_cast<double>(ds.size());
  if (model_init.linear_in_theta()) {
    const Eigen::MatrixXd J = model_init.jacobian(ds.t());
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(J);
    Eigen::VectorXd theta = qr.solve(y);
    if (!theta.allFinite()) throw FitError("least-squares solve produced non-finite parameters", {});
    const double v = (y - J * theta).squaredNorm() / n;
    OptimizerResult res;
    res.theta = theta;
    res.value = v;
    res.trace = {v};
    record_stage(out, res, nullptr);
    out.cond_estimate = qr.maxPivot() > 0.0 ? std::abs(qr.matrixQR()(0, 0)) /
                                                  std::max(std::abs(qr.matrixQR().diagonal().tail(1)[0]), 1e-300)
                                            : kInf;
    out.theta_hat = std::move(theta);
    return out;
  }
  auto f = [&](const Eigen::VectorXd& theta, Eigen::VectorXd& grad) {
    double v = 0.0;
    model_init.with_theta(theta).values_and_vjp(
        ds.t(),
        [&](const Eigen::VectorXd& fx) {
          const Eigen::VectorXd psi = y - fx;
          v = psi.squaredNorm() / n;
          return Eigen::VectorXd(-2.0 / n * psi);
        },
        grad);
    return v;
  };
  const OptimizerResult res = lbfgs_minimize(f, model_init.theta(), opt);
  throw_if_diverged(res, Method::lsq, 0);
  record_stage(out, res, nullptr);
  out.theta_hat = res.theta;
  return out;
}

double prediction_error(const ParamModel& model, const ScenarioParams& params, const Dataset& eval) {
  const Eigen::VectorXd diff = model.values(eval.t()) - true_responses(params, eval.t());
  return diff.squaredNorm() / static_cast<double>(eval.size());
}

}  // namespace smm
