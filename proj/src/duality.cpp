#include "smm/duality.hpp"

#include <cmath>

#include <fmt/format.h>

#include "smm/error.hpp"
#include "smm/kernels.hpp"
#include "smm/random.hpp"

namespace smm {

Eigen::VectorXd InstrumentExpansion::values(const Eigen::MatrixXd& z) const {
  return rbf_kernel(z, anchors, bandwidth_eta) * alpha;
}

Eigen::MatrixXd InstrumentExpansion::gradients(const Eigen::MatrixXd& z) const {
  // grad_z k(z_j, z) = -2 eta (z - z_j) k(z_j, z)
  const Eigen::MatrixXd k = rbf_kernel(z, anchors, bandwidth_eta);
  Eigen::MatrixXd out(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const Eigen::RowVectorXd w = k.row(i).cwiseProduct(alpha.transpose());
    out.row(i) = -2.0 * bandwidth_eta * (w.sum() * z.row(i) - w * anchors);
  }
  return out;
}

Eigen::VectorXd InstrumentExpansion::laplacians(const Eigen::MatrixXd& z) const {
  // Laplacian_z k(z_j, z) = (4 eta^2 ||z - z_j||^2 - 2 eta d) k(z_j, z)
  const Eigen::MatrixXd k = rbf_kernel(z, anchors, bandwidth_eta);
  const auto d = static_cast<double>(z.cols());
  Eigen::VectorXd out(z.rows());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    double s = 0.0;
    for (Eigen::Index j = 0; j < anchors.rows(); ++j) {
      const double r2 = (z.row(i) - anchors.row(j)).squaredNorm();
      s += alpha[j] * k(i, j) * (4.0 * bandwidth_eta * bandwidth_eta * r2 - 2.0 * bandwidth_eta * d);
    }
    out[i] = s;
  }
  return out;
}

double InstrumentExpansion::rkhs_norm_sq() const {
  return alpha.dot(rbf_kernel(anchors, anchors, bandwidth_eta) * alpha);
}

void TransportCost::validate() const {
  for (double g : {gamma_t, gamma_y, gamma_z})
    if (!(g > 0.0) || std::isnan(g)) throw InvalidArgument("transport weights must be positive or infinite");
}

double saddle_objective(const Dataset& ds, const ParamModel& model, const Eigen::VectorXd& theta_tilde,
                        const InstrumentExpansion& h, const SmmConfig& cfg) {
  cfg.validate();
  const auto n = static_cast<double>(ds.size());
  const Eigen::VectorXd hz = h.values(ds.z());
  const MomentEval me = moment_eval(model, ds, false);
  const MomentEval me_tilde = moment_eval(model.with_theta(theta_tilde), ds, false);
  const double m = psi_delta(me, cfg).dot(hz) / n;
  const Eigen::VectorXd g = gradient_weights(me_tilde, cfg);
  const double reg = 0.5 * g.dot(hz.cwiseAbs2()) / n + cfg.lambda_over_eps / 2.0 * h.rkhs_norm_sq();
  return m - cfg.epsilon * reg;
}

InstrumentExpansion optimal_instrument(const Dataset& ds, const ParamModel& model,
                                       const Eigen::VectorXd& theta_tilde, const GramBundle& gram,
                                       const SmmConfig& cfg) {
  cfg.validate();
  const SmmObjective obj(ds, model, theta_tilde, gram, cfg);
  const Eigen::VectorXd pd = psi_delta(moment_eval(model, ds, false), cfg);
  // (eps Q + lambda L)^{-1} = (1/eps) (Q + (lambda/eps) L)^{-1}
  InstrumentExpansion h;
  h.alpha = obj.profile().dual_coefficients(pd) / cfg.epsilon;
  h.anchors = ds.z();
  h.bandwidth_eta = gram.bandwidth_eta;
  return h;
}

namespace {

struct Blocks {
  double st, sy, sz;  // per-unit standard deviations sqrt(eps / gamma), 0 when fixed
};

Blocks block_scales(double epsilon, const TransportCost& cost) {
  auto s = [epsilon](double g) { return std::isinf(g) ? 0.0 : std::sqrt(epsilon / g); };
  return {s(cost.gamma_t), s(cost.gamma_y), s(cost.gamma_z)};
}

}  // namespace

McEstimate mc_dual_estimate(const Dataset& ds, const ParamModel& model, const InstrumentExpansion& h,
                            double epsilon, const TransportCost& cost, int n_mc, std::uint64_t seed) {
  cost.validate();
  if (!(epsilon > 0.0)) throw InvalidArgument("epsilon must be positive");
  if (n_mc < 2 || n_mc % 2 != 0) throw InvalidArgument("n_mc must be a positive even number");
  const Eigen::Index n = ds.size();
  const Eigen::Index dt = ds.dim_t(), dz = ds.dim_z();
  const Eigen::Index pairs = n_mc / 2;
  const Blocks sc = block_scales(epsilon, cost);
  const Eigen::VectorXd y = ds.outcome();
  const Eigen::VectorXd psi0 = y - model.values(ds.t());
  const Eigen::VectorXd h0 = h.values(ds.z());

  double total = 0.0, var_total = 0.0;
  Eigen::MatrixXd tp(n_mc, dt), zp(n_mc, dz);
  Eigen::VectorXd yp(n_mc);
  for (Eigen::Index i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)), streams::monte_carlo);
    for (Eigen::Index k = 0; k < pairs; ++k) {
      for (Eigen::Index c = 0; c < dt; ++c) {
        const double d = sc.st > 0.0 ? sc.st * rng.normal() : 0.0;
        tp(2 * k, c) = ds.t()(i, c) + d;
        tp(2 * k + 1, c) = ds.t()(i, c) - d;
      }
      const double dy = sc.sy > 0.0 ? sc.sy * rng.normal() : 0.0;
      yp[2 * k] = y[i] + dy;
      yp[2 * k + 1] = y[i] - dy;
      for (Eigen::Index c = 0; c < dz; ++c) {
        const double d = sc.sz > 0.0 ? sc.sz * rng.normal() : 0.0;
        zp(2 * k, c) = ds.z()(i, c) + d;
        zp(2 * k + 1, c) = ds.z()(i, c) - d;
      }
    }
    const Eigen::VectorXd psi = yp - model.values(tp);
    const Eigen::VectorXd hv = sc.sz > 0.0 ? h.values(zp) : Eigen::VectorXd::Constant(n_mc, h0[i]);
    const double base = psi0[i] * h0[i];
    // exponent of exp(-(Psi(xi + delta) - Psi(xi)))
    const Eigen::ArrayXd expo = -(psi.array() * hv.array() - base);
    const double m = expo.maxCoeff();
    if (!std::isfinite(m)) throw NumericError("Monte-Carlo exponent is not finite");
    const Eigen::ArrayXd w = (expo - m).exp();
    Eigen::ArrayXd pair_mean(pairs);
    for (Eigen::Index k = 0; k < pairs; ++k) pair_mean[k] = 0.5 * (w[2 * k] + w[2 * k + 1]);
    const double mean = pair_mean.mean();
    if (!(mean > 0.0) || !std::isfinite(mean)) throw NumericError("Monte-Carlo average underflowed");
    const double var = pairs > 1 ? (pair_mean - mean).square().sum() / static_cast<double>(pairs - 1) : 0.0;
    total += base - (m + std::log(mean));
    var_total += var / (static_cast<double>(pairs) * mean * mean);
  }
  McEstimate out;
  out.value = total / static_cast<double>(n);
  out.std_error = std::sqrt(var_total) / static_cast<double>(n);
  if (!std::isfinite(out.value)) throw NumericError("Monte-Carlo dual estimate is not finite");
  return out;
}

double expansion_value(const Dataset& ds, const ParamModel& model, const InstrumentExpansion& h, double epsilon,
                       const TransportCost& cost) {
  cost.validate();
  const auto n = static_cast<double>(ds.size());
  const Eigen::ArrayXd psi = (ds.outcome() - model.values(ds.t())).array();
  const Eigen::ArrayXd hz = h.values(ds.z()).array();
  Eigen::ArrayXd lap = Eigen::ArrayXd::Zero(ds.size());
  Eigen::ArrayXd grad_sq = Eigen::ArrayXd::Zero(ds.size());
  if (!std::isinf(cost.gamma_t)) {
    lap -= hz * model.laplacians(ds.t()).array() / cost.gamma_t;
    grad_sq += hz.square() * model.input_grads(ds.t()).rowwise().squaredNorm().array() / cost.gamma_t;
  }
  if (!std::isinf(cost.gamma_y)) grad_sq += hz.square() / cost.gamma_y;
  if (!std::isinf(cost.gamma_z)) {
    lap += psi * h.laplacians(ds.z()).array() / cost.gamma_z;
    grad_sq += psi.square() * h.gradients(ds.z()).rowwise().squaredNorm().array() / cost.gamma_z;
  }
  return (psi * hz + 0.5 * epsilon * lap - 0.5 * epsilon * grad_sq).sum() / n;
}

ExpansionReport verify_expansion_order(const Dataset& ds, const ParamModel& model, const InstrumentExpansion& h,
                                       const std::vector<double>& eps_grid, const TransportCost& cost, int n_mc,
                                       std::uint64_t seed) {
  if (eps_grid.size() < 3) throw InvalidArgument("expansion order check needs at least three epsilon values");
  for (std::size_t k = 0; k < eps_grid.size(); ++k) {
    if (!(eps_grid[k] > 0.0)) throw InvalidArgument("epsilon values must be positive");
    if (k > 0 && !(eps_grid[k] < eps_grid[k - 1])) throw InvalidArgument("epsilon grid must be strictly decreasing");
  }
  ExpansionReport rep;
  for (double eps : eps_grid) {
    const McEstimate mc = mc_dual_estimate(ds, model, h, eps, cost, n_mc, seed);
    ExpansionPoint p;
    p.epsilon = eps;
    p.mc_value = mc.value;
    p.mc_stderr = mc.std_error;
    p.expansion_value = expansion_value(ds, model, h, eps, cost);
    p.residual = p.mc_value - p.expansion_value;
    if (std::abs(p.residual) < 3.0 * p.mc_stderr || p.residual == 0.0) rep.inconclusive = true;
    rep.points.push_back(p);
  }
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  const auto m = static_cast<double>(rep.points.size());
  for (const auto& p : rep.points) {
    const double x = std::log(p.epsilon);
    const double v = std::log(std::max(std::abs(p.residual), 1e-300));
    sx += x;
    sy += v;
    sxx += x * x;
    sxy += x * v;
  }
  rep.slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
  return rep;
}

}  // namespace smm
