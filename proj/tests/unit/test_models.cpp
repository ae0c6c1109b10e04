#include <doctest.h>

#include <cmath>

#include "../oracles.hpp"
#include "smm/error.hpp"
#include "smm/models.hpp"
#include "smm/random.hpp"

using namespace smm;

namespace {

Eigen::VectorXd vec1(double x) { return Eigen::VectorXd::Constant(1, x); }

Eigen::VectorXd random_vector(Rng& rng, Eigen::Index n, double scale = 1.0) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.normal(0.0, scale);
  return v;
}

}  // namespace

TEST_CASE("quadratic model values and derivatives") {
  const ParamModel m = ParamModel::quadratic().with_theta(Eigen::Vector3d(3.0, -0.5, 0.5));
  CHECK(m.num_params() == 3);
  CHECK(m.value(vec1(1.0)) == doctest::Approx(3.0));
  CHECK(m.grad_input(vec1(1.0))[0] == doctest::Approx(5.5));
  for (double t : {-3.0, 0.0, 1.0, 4.5}) CHECK(m.laplacian_input(vec1(t)) == doctest::Approx(6.0));
  const Eigen::VectorXd j = m.jac_theta(vec1(2.0));
  CHECK(j[0] == 4.0);
  CHECK(j[1] == 2.0);
  CHECK(j[2] == 1.0);
  const Eigen::VectorXd lg = m.laplacian_theta_grad();
  CHECK(lg[0] == 2.0);
  CHECK(lg[1] == 0.0);
  CHECK(lg[2] == 0.0);
}

TEST_CASE("linear model values and derivatives") {
  const ParamModel zero = ParamModel::linear(1).with_theta(Eigen::VectorXd::Zero(1));
  CHECK(zero.value(vec1(17.0)) == 0.0);
  const ParamModel m = ParamModel::linear(1).with_theta(vec1(2.5));
  CHECK(m.grad_input(vec1(-4.0))[0] == 2.5);
  CHECK(m.grad_input(vec1(9.0))[0] == 2.5);
  CHECK(m.laplacian_input(vec1(3.0)) == 0.0);
  CHECK(m.jac_theta(vec1(3.0))[0] == 3.0);
  CHECK(m.piecewise_affine());
  CHECK(m.linear_in_theta());
}

TEST_CASE("parameter count and dimension checks") {
  CHECK(ParamModel::mlp(5, {20, 20, 3}).num_params() == 5 * 20 + 20 + 20 * 20 + 20 + 20 * 3 + 3 + 3 + 1);
  CHECK(ParamModel::mlp(1, {20, 3}).num_params() == 20 + 20 + 60 + 3 + 3 + 1);
  CHECK_THROWS_AS(ParamModel::quadratic().with_theta(Eigen::VectorXd::Zero(2)), InvalidArgument);
  CHECK_THROWS_AS(ParamModel::quadratic().value(Eigen::VectorXd::Zero(2)), InvalidArgument);
  CHECK_THROWS_AS(ParamModel::mlp(2, {0}), InvalidArgument);
}

TEST_CASE("all-zero MLP weights give the output bias") {
  ParamModel m = ParamModel::mlp(2, {4, 3});
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(m.num_params());
  theta[theta.size() - 1] = 0.75;
  m = m.with_theta(theta);
  CHECK(m.value(Eigen::Vector2d(1.0, -2.0)) == 0.75);
  CHECK(m.value(Eigen::Vector2d(-8.0, 3.0)) == 0.75);
}

TEST_CASE("MLP forward pass matches a direct evaluation") {
  Rng rng(1, 0);
  const ParamModel base = ParamModel::mlp(3, {6, 4}, 0.05);
  for (int trial = 0; trial < 20; ++trial) {
    const ParamModel m = base.with_theta(random_vector(rng, base.num_params()));
    const Eigen::VectorXd t = random_vector(rng, 3);
    CHECK(m.value(t) == doctest::Approx(oracle::mlp_value(m.theta(), {3, 6, 4, 1}, 0.05, t)).epsilon(1e-12));
  }
}

TEST_CASE("MLP initialization is Glorot uniform with zero biases") {
  const ParamModel m = ParamModel::mlp(5, {20, 20, 3}).initialized(42);
  const ParamModel again = ParamModel::mlp(5, {20, 20, 3}).initialized(42);
  CHECK(m.theta() == again.theta());
  // first layer: W 20x5 then b 20
  const double lim = std::sqrt(6.0 / 25.0);
  CHECK(m.theta().head(100).cwiseAbs().maxCoeff() <= lim);
  CHECK(m.theta().head(100).cwiseAbs().maxCoeff() > 0.5 * lim);
  CHECK(m.theta().segment(100, 20).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("input gradients and parameter Jacobians match central differences") {
  Rng rng(3, 0);
  const std::vector<ParamModel> bases{ParamModel::linear(3), ParamModel::quadratic(), ParamModel::mlp(1, {20, 3}),
                                      ParamModel::mlp(5, {20, 20, 3})};
  int checked = 0;
  for (const ParamModel& base : bases) {
    for (int trial = 0; trial < 100; ++trial) {
      const ParamModel m = base.family() == ModelFamily::mlp ? base.initialized(rng.index(1u << 30))
                                                             : base.with_theta(random_vector(rng, base.num_params()));
      const Eigen::VectorXd t = random_vector(rng, m.dim_t(), 2.0);
      if (m.kink_distance(t) < 1e-3) continue;
      const Eigen::VectorXd gi = m.grad_input(t);
      const Eigen::VectorXd gi_fd = oracle::fd_gradient([&](const Eigen::VectorXd& x) { return m.value(x); }, t);
      CHECK(oracle::rel_err(gi, gi_fd) <= 1e-5);
      const Eigen::VectorXd jt = m.jac_theta(t);
      const Eigen::VectorXd jt_fd = oracle::fd_gradient(
          [&](const Eigen::VectorXd& th) { return m.with_theta(th).value(t); }, m.theta());
      CHECK(oracle::rel_err(jt, jt_fd) <= 1e-5);
      ++checked;
    }
  }
  CHECK(checked >= 380);
}

TEST_CASE("leaky-ReLU MLP has zero input Laplacian") {
  const ParamModel m = ParamModel::mlp(2, {5, 3}).initialized(7);
  CHECK(m.laplacian_input(Eigen::Vector2d(0.3, -1.2)) == 0.0);
  CHECK(m.laplacian_theta_grad().cwiseAbs().maxCoeff() == 0.0);
  CHECK(m.piecewise_affine());
  CHECK(!m.linear_in_theta());
}

TEST_CASE("batched evaluations agree with per-point ones") {
  Rng rng(5, 0);
  const ParamModel m = ParamModel::mlp(2, {7, 3}).initialized(9);
  Eigen::MatrixXd t(15, 2);
  for (Eigen::Index i = 0; i < t.rows(); ++i) t.row(i) = random_vector(rng, 2).transpose();
  const Eigen::VectorXd w = random_vector(rng, 15);

  const Eigen::VectorXd v = m.values(t);
  const Eigen::MatrixXd g = m.input_grads(t);
  const Eigen::MatrixXd J = m.jacobian(t);
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    CHECK(v[i] == doctest::Approx(m.value(t.row(i).transpose())).epsilon(1e-13));
    CHECK(oracle::rel_err(g.row(i).transpose(), m.grad_input(t.row(i).transpose())) < 1e-13);
    CHECK(oracle::rel_err(J.row(i).transpose(), m.jac_theta(t.row(i).transpose())) < 1e-13);
  }
  CHECK(oracle::rel_err(m.vjp(t, w), J.transpose() * w) < 1e-12);

  Eigen::VectorXd grad;
  const Eigen::VectorXd vals = m.values_and_vjp(t, [&](const Eigen::VectorXd& f) { return Eigen::VectorXd(2.0 * f); }, grad);
  CHECK(oracle::rel_err(vals, v) < 1e-14);
  CHECK(oracle::rel_err(grad, J.transpose() * (2.0 * v)) < 1e-12);
}

TEST_CASE("moment evaluation") {
  const ParamModel m = ParamModel::quadratic().with_theta(Eigen::Vector3d(3.0, -0.5, 0.5));
  Eigen::MatrixXd t(2, 1), y(2, 1), z(2, 1);
  t << 1.0, 2.0;
  y << 5.0, 0.0;
  z << 0.0, 1.0;
  const Dataset ds(t, y, z);
  const MomentEval me = moment_eval(m, ds);
  CHECK(me.psi[0] == doctest::Approx(2.0));
  CHECK(me.grad_t_psi(0, 0) == doctest::Approx(-5.5));
  CHECK(me.laplacian_t_psi[0] == doctest::Approx(-6.0));
  CHECK(me.jac_theta_psi(1, 0) == doctest::Approx(-4.0));

  SUBCASE("noise-free data give a zero residual") {
    const Dataset clean(t, m.values(t), z);
    CHECK(moment_eval(m, clean).psi.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("residual is affine in y") {
    const Dataset shifted(t, (y.array() + 1.25).matrix(), z);
    const Eigen::VectorXd d = moment_eval(m, shifted).psi - me.psi;
    CHECK(d.cwiseAbs().maxCoeff() == doctest::Approx(1.25));
    CHECK(d.minCoeff() == doctest::Approx(1.25));
  }
  SUBCASE("vector outcomes are unsupported") {
    const Dataset wide(t, Eigen::MatrixXd::Ones(2, 2), z);
    CHECK_THROWS_AS(moment_eval(m, wide), Unsupported);
  }
}
