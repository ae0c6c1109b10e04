#include <doctest.h>

#include <cmath>

#include "../oracles.hpp"
#include "smm/error.hpp"
#include "smm/random.hpp"
#include "smm/selection.hpp"

using namespace smm;

TEST_CASE("single-point grids return that configuration") {
  const auto [train, params] = gen_simple_iv(300, 1);
  const Dataset valid = sample_scenario(params, 300, 2);
  GridSpec grid;
  grid.eps_values = {1e-4};
  grid.lambda_over_eps_values = {1e-2};
  grid.vmm_lambda_values = {1e-3};
  const SelectionResult s = select_and_fit(train, valid, Method::smm, ParamModel::quadratic(), grid);
  REQUIRE(s.table.size() == 1);
  CHECK(s.chosen.epsilon == 1e-4);
  CHECK(s.chosen.lambda_over_eps == 1e-2);
  CHECK(s.chosen.lambda == doctest::Approx(1e-6));

  const SelectionResult v = select_and_fit(train, valid, Method::vmm, ParamModel::quadratic(), grid);
  REQUIRE(v.table.size() == 1);
  CHECK(v.chosen.lambda == 1e-3);
  CHECK(std::isnan(v.chosen.epsilon));

  const SelectionResult l = select_and_fit(train, valid, Method::lsq, ParamModel::quadratic(), grid);
  CHECK(l.table.size() == 1);
  const SelectionResult m = select_and_fit(train, valid, Method::mmr, ParamModel::quadratic(), grid);
  CHECK(m.table.size() == 1);
}

TEST_CASE("full default grid: chosen score is the table minimum") {
  const auto [train, params] = gen_simple_iv(500, 3);
  const Dataset valid = sample_scenario(params, 500, 4);
  const GridSpec grid;
  const SelectionResult s = select_and_fit(train, valid, Method::smm, ParamModel::quadratic(), grid);
  CHECK(s.table.size() == 12);
  for (const auto& row : s.table) {
    CHECK(s.chosen.valid_mmr <= row.valid_mmr);
    CHECK(row.valid_mmr >= 0.0);
    CHECK(row.lambda == doctest::Approx(row.epsilon * row.lambda_over_eps));
  }
  // rows come in ascending (eps, lambda/eps) order
  for (std::size_t k = 1; k < s.table.size(); ++k) {
    const auto& a = s.table[k - 1];
    const auto& b = s.table[k];
    CHECK((a.epsilon < b.epsilon || (a.epsilon == b.epsilon && a.lambda_over_eps < b.lambda_over_eps)));
  }
  // the returned fit scores what the table says
  const GramBundle vg = gram(valid.z());
  CHECK(mmr_objective(valid, ParamModel::quadratic().with_theta(s.fit.theta_hat), vg) ==
        doctest::Approx(s.chosen.valid_mmr).epsilon(1e-12));

  const SelectionResult again = select_and_fit(train, valid, Method::smm, ParamModel::quadratic(), grid);
  CHECK(again.fit.theta_hat == s.fit.theta_hat);

  const SelectionResult v = select_and_fit(train, valid, Method::vmm, ParamModel::quadratic(), grid);
  CHECK(v.table.size() == 4);
  for (const auto& row : v.table) CHECK(v.chosen.valid_mmr <= row.valid_mmr);
}

TEST_CASE("a configuration that zeroes the validation residual wins") {
  // noise-free data on f(t) = 2t: a fit that interpolates scores zero on validation
  Rng rng(5, 0);
  const Eigen::Index n = 80;
  Eigen::MatrixXd t(n, 1), y(n, 1), z(n, 1);
  for (Eigen::Index i = 0; i < n; ++i) {
    z(i, 0) = rng.uniform(-1.0, 1.0);
    t(i, 0) = z(i, 0);
    y(i, 0) = 2.0 * t(i, 0);
  }
  const Dataset train(t, y, z), valid(t, y, z);
  GridSpec grid;
  grid.eps_values = {1e-2};
  grid.lambda_over_eps_values = {1e-2, 1.0};
  const SelectionResult s = select_and_fit(train, valid, Method::smm, ParamModel::linear(1), grid);
  CHECK(s.chosen.valid_mmr <= 1e-10);
  for (const auto& row : s.table) CHECK(s.chosen.valid_mmr <= row.valid_mmr);
}

TEST_CASE("grid validation") {
  const auto [train, params] = gen_simple_iv(50, 1);
  GridSpec grid;
  grid.eps_values = {};
  CHECK_THROWS_AS(select_and_fit(train, train, Method::smm, ParamModel::quadratic(), grid), InvalidArgument);
  grid = GridSpec{};
  grid.lambda_over_eps_values = {1e-2, -1.0};
  CHECK_THROWS_AS(grid.validate(), InvalidArgument);
  grid = GridSpec{};
  grid.vmm_lambda_values = {};
  CHECK_THROWS_AS(select_and_fit(train, train, Method::vmm, ParamModel::quadratic(), grid), InvalidArgument);
}

TEST_CASE("failed grid points are skipped with a warning") {
  // at an absurd eps the Laplacian correction overflows the profile for a quadratic model
  const auto [train, params] = gen_simple_iv(100, 2);
  const Dataset valid = sample_scenario(params, 100, 3);
  GridSpec grid;
  grid.eps_values = {1e-2, 1e300};
  grid.lambda_over_eps_values = {1e-2};
  const SelectionResult s = select_and_fit(train, valid, Method::smm, ParamModel::quadratic(), grid);
  CHECK(s.table.size() == 1);
  CHECK(s.warnings.size() == 1);
  CHECK(s.chosen.epsilon == 1e-2);

  grid.eps_values = {1e300};
  CHECK_THROWS_AS(select_and_fit(train, valid, Method::smm, ParamModel::quadratic(), grid), FitError);
}
