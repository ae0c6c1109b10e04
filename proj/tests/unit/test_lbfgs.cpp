#include <doctest.h>

#include <cmath>
#include <limits>

#include "smm/error.hpp"
#include "smm/lbfgs.hpp"
#include "smm/random.hpp"

using namespace smm;

TEST_CASE("quadratic bowl from random starts") {
  Rng rng(1, 0);
  Eigen::VectorXd a(6);
  for (int k = 0; k < 6; ++k) a[k] = rng.normal(0.0, 3.0);
  const Objective bowl = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = 2.0 * (x - a);
    return (x - a).squaredNorm();
  };
  OptimizerConfig cfg;
  cfg.grad_tol = 1e-10;
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::VectorXd x0(6);
    for (int k = 0; k < 6; ++k) x0[k] = rng.normal(0.0, 10.0);
    const OptimizerResult r = lbfgs_minimize(bowl, x0, cfg);
    CHECK(r.status == OptimizerStatus::converged);
    CHECK((r.theta - a).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("ill-scaled quadratic") {
  Eigen::VectorXd d(4);
  d << 1.0, 10.0, 100.0, 1000.0;
  const Objective f = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = (d.array() * x.array()).matrix();
    return 0.5 * x.dot(g);
  };
  OptimizerConfig cfg;
  cfg.grad_tol = 1e-9;
  const OptimizerResult r = lbfgs_minimize(f, Eigen::VectorXd::Ones(4), cfg);
  CHECK(r.status == OptimizerStatus::converged);
  CHECK(r.theta.cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("Rosenbrock from the classic start") {
  const Objective rosen = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    const double a = 1.0 - x[0], b = x[1] - x[0] * x[0];
    g.resize(2);
    g[0] = -2.0 * a - 400.0 * x[0] * b;
    g[1] = 200.0 * b;
    return a * a + 100.0 * b * b;
  };
  OptimizerConfig cfg;
  cfg.grad_tol = 1e-10;
  cfg.max_iters = 1000;
  const OptimizerResult r = lbfgs_minimize(rosen, Eigen::Vector2d(-1.2, 1.0), cfg);
  CHECK(r.status == OptimizerStatus::converged);
  CHECK(std::abs(r.theta[0] - 1.0) <= 1e-5);
  CHECK(std::abs(r.theta[1] - 1.0) <= 1e-5);
  for (std::size_t k = 1; k < r.trace.size(); ++k) CHECK(r.trace[k] <= r.trace[k - 1]);
}

TEST_CASE("zero gradient at the start returns immediately") {
  int calls = 0;
  const Objective flat = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    ++calls;
    g = Eigen::VectorXd::Zero(x.size());
    return 3.0;
  };
  const OptimizerResult r = lbfgs_minimize(flat, Eigen::Vector3d(1, 2, 3));
  CHECK(r.status == OptimizerStatus::converged);
  CHECK(r.iterations == 0);
  CHECK(calls == 1);
  CHECK(r.theta == Eigen::Vector3d(1, 2, 3));
}

TEST_CASE("non-finite objective stops with the best point") {
  const Objective bad = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    g = Eigen::VectorXd::Ones(x.size());
    return std::numeric_limits<double>::quiet_NaN();
  };
  const OptimizerResult r = lbfgs_minimize(bad, Eigen::Vector2d(0.5, 0.5));
  CHECK(r.status == OptimizerStatus::non_finite);
  CHECK(r.theta == Eigen::Vector2d(0.5, 0.5));

  // a barrier that is NaN outside the unit disc: trial points there just fail Armijo
  const Objective barrier = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    if (x.squaredNorm() >= 1.0) {
      g = Eigen::VectorXd::Constant(x.size(), std::numeric_limits<double>::quiet_NaN());
      return std::numeric_limits<double>::quiet_NaN();
    }
    g = 2.0 * (x - Eigen::Vector2d(0.5, 0.0)) + 2.0 * x / (1.0 - x.squaredNorm());
    return (x - Eigen::Vector2d(0.5, 0.0)).squaredNorm() - std::log(1.0 - x.squaredNorm());
  };
  const OptimizerResult rb = lbfgs_minimize(barrier, Eigen::Vector2d(0.0, 0.0));
  CHECK(rb.status == OptimizerStatus::converged);
  CHECK(rb.theta.norm() < 1.0);
}

TEST_CASE("iteration cap is reported") {
  const Objective rosen = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    const double a = 1.0 - x[0], b = x[1] - x[0] * x[0];
    g.resize(2);
    g[0] = -2.0 * a - 400.0 * x[0] * b;
    g[1] = 200.0 * b;
    return a * a + 100.0 * b * b;
  };
  OptimizerConfig cfg;
  cfg.max_iters = 3;
  const OptimizerResult r = lbfgs_minimize(rosen, Eigen::Vector2d(-1.2, 1.0), cfg);
  CHECK(r.status == OptimizerStatus::max_iters);
  CHECK(r.iterations == 3);
}

TEST_CASE("optimizer config validation") {
  OptimizerConfig cfg;
  cfg.memory = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = OptimizerConfig{};
  cfg.grad_tol = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
  cfg = OptimizerConfig{};
  cfg.shrink = 1.0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgument);
}
