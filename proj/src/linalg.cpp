#include "smm/linalg.hpp"

#include <cmath>
#include <limits>

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include "smm/error.hpp"

namespace smm {

LowRankFactor pivoted_cholesky(const Eigen::MatrixXd& K, double tol) {
  const Eigen::Index n = K.rows();
  if (K.cols() != n) throw InvalidArgument("pivoted_cholesky needs a square matrix");
  LowRankFactor out;
  Eigen::VectorXd diag = K.diagonal();
  // Ties in the residual diagonal (all of them on the first step for a normalized kernel)
  // go to the larger row sum, so the pivot sequence follows the rows under permutation.
  const Eigen::VectorXd row_sum = K.rowwise().sum();
  std::vector<bool> used(static_cast<std::size_t>(n), false);
  Eigen::MatrixXd F(n, std::min<Eigen::Index>(n, 64));
  Eigen::Index r = 0;
  while (r < n) {
    Eigen::Index piv = -1;
    double best = tol;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (used[static_cast<std::size_t>(i)]) continue;
      if (diag[i] > best || (piv >= 0 && diag[i] == best && row_sum[i] > row_sum[piv])) {
        best = diag[i];
        piv = i;
      }
    }
    if (piv < 0) break;
    if (r == F.cols()) F.conservativeResize(Eigen::NoChange, std::min<Eigen::Index>(n, 2 * F.cols()));
    const double root = std::sqrt(best);
    Eigen::VectorXd col = K.col(piv);
    if (r > 0) col.noalias() -= F.leftCols(r) * F.row(piv).head(r).transpose();
    col /= root;
    for (Eigen::Index i = 0; i < n; ++i)
      if (used[static_cast<std::size_t>(i)]) col[i] = 0.0;
    col[piv] = root;
    F.col(r) = col;
    used[static_cast<std::size_t>(piv)] = true;
    out.pivots.push_back(piv);
    diag -= col.cwiseAbs2();
    diag[piv] = 0.0;
    ++r;
  }
  F.conservativeResize(Eigen::NoChange, r);
  out.F = std::move(F);
  double rest = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    if (!used[static_cast<std::size_t>(i)]) rest += std::max(diag[i], 0.0);
  out.residual_trace = rest;
  return out;
}

WeightedKernelProfile::WeightedKernelProfile(const Eigen::MatrixXd& F, const Eigen::VectorXd& g, double ridge)
    : F_(F), n_(F.rows()) {
  if (g.size() != n_) throw InvalidArgument("weight vector length does not match factor rows");
  if (!(ridge >= 0.0) || !std::isfinite(ridge)) throw InvalidArgument("ridge must be finite and nonnegative");
  if ((g.array() < 0.0).any() || !g.allFinite()) throw InvalidArgument("weights must be finite and nonnegative");
  const Eigen::Index r = F.cols();
  if (r == 0) throw DegenerateData("kernel factor has rank zero");

  const Eigen::MatrixXd Fg = F.array().colwise() * g.array().sqrt();
  Eigen::MatrixXd S = Eigen::MatrixXd::Zero(r, r);
  S.selfadjointView<Eigen::Lower>().rankUpdate(Fg.transpose(), 1.0 / static_cast<double>(n_));
  S = S.selfadjointView<Eigen::Lower>();
  S.diagonal().array() += ridge;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  if (es.info() != Eigen::Success) throw NumericError("eigen-decomposition of reduced system failed");
  Eigen::VectorXd lam = es.eigenvalues();
  const double scale = S.trace() / static_cast<double>(r);
  auto certified = [](const Eigen::VectorXd& l) {
    return l.maxCoeff() > 0.0 && l.minCoeff() > kCertifyRatio * l.maxCoeff();
  };
  if (!certified(lam)) {
    bool ok = false;
    if (scale > 0.0 && std::isfinite(scale)) {
      for (double level : kJitterLevels) {
        jitter_ = level * scale;
        if (certified((lam.array() + jitter_).matrix())) {
          ok = true;
          break;
        }
      }
    }
    const double cond = lam.minCoeff() > 0.0 ? lam.maxCoeff() / lam.minCoeff() : std::numeric_limits<double>::infinity();
    if (!ok) throw IllConditioned("weighted kernel system is singular after jitter", cond);
  }
  eigvals_ = lam.array() + jitter_;
  eigvecs_ = es.eigenvectors();
  cond_ = eigvals_.maxCoeff() / eigvals_.minCoeff();
}

Eigen::VectorXd WeightedKernelProfile::solve_reduced(const Eigen::VectorXd& u) const {
  Eigen::VectorXd c = eigvecs_.transpose() * u;
  c.array() /= eigvals_.array();
  return eigvecs_ * c;
}

double WeightedKernelProfile::value(const Eigen::VectorXd& v) const {
  const Eigen::VectorXd u = F_.transpose() * v;
  const Eigen::VectorXd c = eigvecs_.transpose() * u;
  const double n2 = static_cast<double>(n_) * static_cast<double>(n_);
  return 0.5 * (c.array().square() / eigvals_.array()).sum() / n2;
}

Eigen::VectorXd WeightedKernelProfile::weights(const Eigen::VectorXd& v) const {
  Eigen::VectorXd w;
  value_and_weights(v, w);
  return w;
}

double WeightedKernelProfile::value_and_weights(const Eigen::VectorXd& v, Eigen::VectorXd& w) const {
  const Eigen::VectorXd u = F_.transpose() * v;
  const Eigen::VectorXd s = solve_reduced(u);
  const double n2 = static_cast<double>(n_) * static_cast<double>(n_);
  w = F_ * s / n2;
  return 0.5 * u.dot(s) / n2;
}

Eigen::MatrixXd WeightedKernelProfile::whiten(const Eigen::MatrixXd& X) const {
  if (X.rows() != n_) throw InvalidArgument("whiten: row count does not match factor");
  const Eigen::ArrayXd scale = eigvals_.array().sqrt() * static_cast<double>(n_);
  return ((eigvecs_.transpose() * (F_.transpose() * X)).array().colwise() / scale).matrix();
}

Eigen::VectorXd WeightedKernelProfile::dual_coefficients(const Eigen::VectorXd& v) const {
  // With a = F^T alpha the problem decouples into a = (B + ridge I)^{-1} F^T v / n;
  // alpha is the minimum-norm preimage of a.
  const Eigen::VectorXd a = solve_reduced(F_.transpose() * v) / static_cast<double>(n_);
  const Eigen::MatrixXd FtF = F_.transpose() * F_;
  return F_ * FtF.ldlt().solve(a);
}

}  // namespace smm
