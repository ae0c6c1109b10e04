#include <doctest.h>

#include <cmath>

#include "smm/attacks.hpp"
#include "smm/error.hpp"
#include "smm/estimators.hpp"

using namespace smm;

TEST_CASE("eps = 0 leaves the data unchanged") {
  const auto [ds, params] = gen_adversarial_nl(200, 1);
  const ParamModel m = ParamModel::mlp(5, {8, 3}).initialized(2);
  const Dataset out = fgsm_perturb(ds, m, 0.0);
  CHECK(out.t() == ds.t());
  CHECK(out.y() == ds.y());
  CHECK(out.z() == ds.z());
}

TEST_CASE("sign of the step on a linear model") {
  Eigen::MatrixXd t(3, 1), y(3, 1), z = Eigen::MatrixXd::Zero(3, 1);
  t << 1.0, 1.0, 2.0;
  y << 0.0, 5.0, 4.0;  // residual f - y: 2 > 0, -3 < 0, exactly 0
  const ParamModel m = ParamModel::linear(1).with_theta(Eigen::VectorXd::Constant(1, 2.0));
  const Dataset out = fgsm_perturb(Dataset(t, y, z), m, 0.3);
  // d/dt (f - y)^2 = 2 (f - y) theta
  CHECK(out.t()(0, 0) == doctest::Approx(1.3));
  CHECK(out.t()(1, 0) == doctest::Approx(0.7));
  CHECK(out.t()(2, 0) == 2.0);
  CHECK(out.y() == y);

  const ParamModel neg = ParamModel::linear(1).with_theta(Eigen::VectorXd::Constant(1, -1.0));
  const Dataset out2 = fgsm_perturb(Dataset(t, y, z), neg, 0.5);
  // f - y = -1, -6, -6 with theta < 0: gradient positive everywhere
  CHECK(out2.t()(0, 0) == doctest::Approx(1.5));
}

TEST_CASE("step size is eps wherever the gradient is nonzero") {
  const auto [ds, params] = gen_adversarial_nl(300, 4);
  const ParamModel m = ParamModel::mlp(5, {10, 3}).initialized(5);
  const double eps = 0.37;
  const Dataset out = fgsm_perturb(ds, m, eps);
  const Eigen::MatrixXd d = (out.t() - ds.t()).cwiseAbs();
  int moved = 0;
  for (Eigen::Index i = 0; i < d.rows(); ++i)
    for (Eigen::Index k = 0; k < d.cols(); ++k) {
      if (d(i, k) != 0.0) {
        CHECK(d(i, k) == doctest::Approx(eps).epsilon(1e-12));
        ++moved;
      }
    }
  CHECK(moved > 0);
  CHECK_THROWS_AS(fgsm_perturb(ds, m, -0.1), InvalidArgument);
}

TEST_CASE("sweep rows and the clean entry") {
  const auto [ds, params] = gen_simple_iv(500, 3);
  const ParamModel m = ParamModel::quadratic().with_theta(Eigen::Vector3d(2.8, -0.4, 0.7));
  AttackConfig atk;
  const auto rows = adversarial_mse_sweep(ds, params, m, atk);
  REQUIRE(rows.size() == 11);
  CHECK(rows[0].eps == 0.0);
  CHECK(rows[0].mse == doctest::Approx(prediction_error(m, params, ds)).epsilon(1e-14));
  for (const auto& r : rows) {
    CHECK(std::isfinite(r.mse));
    CHECK(r.std_error >= 0.0);
  }
  // each row scores the perturbed covariates against the true response
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const Dataset adv = fgsm_perturb(ds, m, rows[k].eps);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < adv.size(); ++i) {
      const double tt = adv.t()(i, 0);
      const double f0 = params.theta0[0] * tt * tt + params.theta0[1] * tt + params.theta0[2];
      acc += std::pow(2.8 * tt * tt - 0.4 * tt + 0.7 - f0, 2);
    }
    CHECK(rows[k].mse == doctest::Approx(acc / static_cast<double>(adv.size())).epsilon(1e-12));
  }
  CHECK(rows.back().mse != rows[0].mse);

  AttackConfig bad;
  bad.eps_grid = {0.2, 0.1};
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad.eps_grid = {-0.1, 0.1};
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);

  const auto [net, nparams] = gen_network_iv(50, 1, NetworkVariant::abs);
  CHECK_NOTHROW(adversarial_mse_sweep(net, nparams, ParamModel::mlp(1, {4}).initialized(1), atk));
}

TEST_CASE("SMM is closer to the truth than least squares on clean SimpleIV") {
  const auto [ds, params] = gen_simple_iv(1000, 21);
  const Dataset test = sample_scenario(params, 2000, 77);
  const ParamModel init = ParamModel::quadratic();
  AttackConfig atk;
  atk.eps_grid = {0.0};
  const double smm = adversarial_mse_sweep(test, params, init.with_theta(fit_smm(ds, init, SmmConfig{}).theta_hat), atk)[0].mse;
  const double lsq = adversarial_mse_sweep(test, params, init.with_theta(fit_lsq(ds, init).theta_hat), atk)[0].mse;
  CHECK(smm < lsq);
}
