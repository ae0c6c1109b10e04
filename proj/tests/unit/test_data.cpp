#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "smm/data.hpp"
#include "smm/error.hpp"
#include "smm/random.hpp"

using namespace smm;

TEST_CASE("simple_iv shape, instrument range and parameters") {
  const auto [ds, params] = gen_simple_iv(1000, 7);
  CHECK(ds.size() == 1000);
  CHECK(ds.dim_t() == 1);
  CHECK(ds.z().minCoeff() >= -1.0);
  CHECK(ds.z().maxCoeff() <= 1.0);
  REQUIRE(params.theta0.size() == 3);
  CHECK(params.theta0[0] == 3.0);
  CHECK(params.theta0[1] == -0.5);
  CHECK(params.theta0[2] == 0.5);
  CHECK_THROWS_AS(gen_simple_iv(0, 1), InvalidArgument);
}

TEST_CASE("simple_iv confounder mean obeys the CLT bound") {
  const auto d = draw_simple_iv(5000, 11);
  CHECK(std::abs(d.u.mean()) < 4.0 / std::sqrt(5000.0));
}

TEST_CASE("simple_iv rows follow the structural equations") {
  const auto d = draw_simple_iv(50, 3);
  const Eigen::Vector3d theta0(3.0, -0.5, 0.5);
  const Dataset ds = assemble_simple_iv(d, theta0);
  for (Eigen::Index i = 0; i < 50; ++i) {
    const double t = -0.75 * d.z0[i] + 3.5 * d.u[i] + 0.14 * d.eta1[i] - 0.6;
    CHECK(ds.t()(i, 0) == doctest::Approx(t).epsilon(1e-14));
    CHECK(ds.z()(i, 0) == doctest::Approx(std::sin(std::numbers::pi * d.z0[i] / 10.0)).epsilon(1e-14));
    const double y = 3.0 * t * t - 0.5 * t + 0.5 - 10.0 * d.u[i] + 0.1 * d.eta2[i];
    CHECK(ds.y()(i, 0) == doctest::Approx(y).epsilon(1e-12));
  }
}

TEST_CASE("simple_iv instrument mean vanishes by symmetry") {
  const auto [ds, params] = gen_simple_iv(100000, 5);
  CHECK(std::abs(ds.z().mean()) < 0.02);
}

TEST_CASE("adversarial_nl parameters and outcome noise") {
  const auto [ds, params] = gen_adversarial_nl(2000, 3);
  REQUIRE(params.a.size() == 5);
  REQUIRE(params.b.size() == 5);
  CHECK(params.a.minCoeff() >= -1.5);
  CHECK(params.a.maxCoeff() <= 1.5);
  CHECK(params.b.minCoeff() >= 0.1);
  CHECK(params.b.maxCoeff() <= 0.3);
  CHECK(ds.dim_t() == 5);

  Eigen::VectorXd r(ds.size());
  for (Eigen::Index i = 0; i < ds.size(); ++i) r[i] = ds.y()(i, 0) - true_response(params, ds.t().row(i).transpose());
  const double var = (r.array() - r.mean()).square().sum() / (r.size() - 1);
  CHECK(std::abs(var - 1.1) / 1.1 < 0.15);
}

TEST_CASE("adversarial_nl structural function at known arguments") {
  ScenarioParams p;
  p.scenario = Scenario::adversarial_nl;
  p.a = Eigen::RowVectorXd::Zero(5);
  p.a[0] = 1.0;
  p.b = Eigen::VectorXd::Constant(5, 0.2);
  Eigen::VectorXd t = Eigen::VectorXd::Zero(5);
  t[1] = 7.0;  // A t = 0
  CHECK(true_response(p, t) == doctest::Approx(1.5));
  t[0] = std::numbers::pi;
  CHECK(true_response(p, t) == doctest::Approx(-1.5 + 0.1 * std::numbers::pi).epsilon(1e-12));
  CHECK(true_response(p, t) == doctest::Approx(-1.18584).epsilon(1e-5));
}

TEST_CASE("network_iv variants") {
  SUBCASE("noise-free linear path gives y = t = z") {
    NetworkIvDraws d = draw_network_iv(20, 4);
    d.e.setZero();
    d.gamma.setZero();
    d.delta.setZero();
    const Dataset ds = assemble_network_iv(d, NetworkVariant::linear);
    CHECK((ds.y() - ds.t()).cwiseAbs().maxCoeff() == 0.0);
    CHECK((ds.t() - ds.z()).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("structural functions") {
    ScenarioParams p;
    p.scenario = Scenario::network_iv;
    const Eigen::VectorXd m1 = Eigen::VectorXd::Constant(1, -1.0);
    const Eigen::VectorXd m2 = Eigen::VectorXd::Constant(1, -2.0);
    p.variant = NetworkVariant::step;
    CHECK(true_response(p, m1) == 0.0);
    CHECK(true_response(p, Eigen::VectorXd::Zero(1)) == 1.0);
    p.variant = NetworkVariant::abs;
    CHECK(true_response(p, m2) == 2.0);
    p.variant = NetworkVariant::sin;
    CHECK(true_response(p, m1) == doctest::Approx(std::sin(-1.0)));
  }
  SUBCASE("treatment correlates with the instrument") {
    const auto [ds, params] = gen_network_iv(1000, 1, NetworkVariant::sin);
    const Eigen::ArrayXd t = ds.t().col(0).array() - ds.t().mean();
    const Eigen::ArrayXd z = ds.z().col(0).array() - ds.z().mean();
    const double corr = (t * z).sum() / std::sqrt(t.square().sum() * z.square().sum());
    CHECK(corr > 0.5);
  }
  CHECK_THROWS_AS(parse_network_variant("cosine"), InvalidArgument);
}

TEST_CASE("simple_iv structural function at zero") {
  const auto [ds, params] = gen_simple_iv(5, 1);
  CHECK(true_response(params, Eigen::VectorXd::Zero(1)) == 0.5);
}

TEST_CASE("generators are deterministic in the seed") {
  const auto a = gen_adversarial_nl(100, 9).first;
  const auto b = gen_adversarial_nl(100, 9).first;
  const auto c = gen_adversarial_nl(100, 10).first;
  CHECK(a.t() == b.t());
  CHECK(a.y() == b.y());
  CHECK(a.z() == b.z());
  CHECK(a.t() != c.t());
  const auto n1 = gen_network_iv(100, 2, NetworkVariant::abs).first;
  const auto n2 = gen_network_iv(100, 2, NetworkVariant::abs).first;
  CHECK(n1.y() == n2.y());
}

TEST_CASE("sample_scenario reuses stored adversarial parameters") {
  const auto [ds, params] = gen_adversarial_nl(10, 4);
  const Dataset fresh = sample_scenario(params, 300, 99);
  CHECK(fresh.size() == 300);
  Eigen::VectorXd r(fresh.size());
  for (Eigen::Index i = 0; i < fresh.size(); ++i)
    r[i] = fresh.y()(i, 0) - true_response(params, fresh.t().row(i).transpose());
  CHECK(std::abs(r.mean()) < 0.3);
}

TEST_CASE("dataset invariants") {
  Eigen::MatrixXd t = Eigen::MatrixXd::Ones(3, 1), y = Eigen::MatrixXd::Ones(3, 1), z = Eigen::MatrixXd::Ones(2, 1);
  CHECK_THROWS_AS(Dataset(t, y, z), InvalidArgument);
  z = Eigen::MatrixXd::Ones(3, 1);
  y(1, 0) = std::nan("");
  CHECK_THROWS_AS(Dataset(t, y, z), InvalidArgument);
  y(1, 0) = INFINITY;
  CHECK_THROWS_AS(Dataset(t, y, z), InvalidArgument);
  CHECK_THROWS_AS(Dataset(Eigen::MatrixXd(0, 1), Eigen::MatrixXd(0, 1), Eigen::MatrixXd(0, 1)), InvalidArgument);
}

TEST_CASE("corruption replaces exactly round(fraction n) rows") {
  const auto [ds, params] = gen_simple_iv(1000, 2);
  const double tmin = ds.t().minCoeff(), tmax = ds.t().maxCoeff();

  const Dataset same = corrupt_covariates(ds, 0.0, 1);
  CHECK(same.t() == ds.t());

  const Dataset all = corrupt_covariates(ds, 1.0, 1);
  CHECK(all.t().minCoeff() >= tmin);
  CHECK(all.t().maxCoeff() <= tmax);

  const Dataset part = corrupt_covariates(ds, 0.4, 3);
  int changed = 0;
  for (Eigen::Index i = 0; i < ds.size(); ++i) changed += part.t()(i, 0) != ds.t()(i, 0);
  CHECK(changed == 400);
  CHECK(part.y() == ds.y());
  CHECK(part.z() == ds.z());

  CHECK_THROWS_AS(corrupt_covariates(ds, -0.1, 1), InvalidArgument);
  CHECK_THROWS_AS(corrupt_covariates(ds, 1.1, 1), InvalidArgument);
}

TEST_CASE("corruption uses per-column ranges for vector treatments") {
  const auto [ds, params] = gen_adversarial_nl(500, 6);
  const Dataset c = corrupt_covariates(ds, 1.0, 8);
  for (Eigen::Index k = 0; k < ds.dim_t(); ++k) {
    CHECK(c.t().col(k).minCoeff() >= ds.t().col(k).minCoeff());
    CHECK(c.t().col(k).maxCoeff() <= ds.t().col(k).maxCoeff());
  }
}

TEST_CASE("csv round trip") {
  const auto [ds, params] = gen_adversarial_nl(50, 12);
  const auto path = std::filesystem::temp_directory_path() / "smm_test_roundtrip.csv";
  save_csv(ds, path);
  const Dataset back = load_csv(path);
  std::filesystem::remove(path);
  REQUIRE(back.size() == ds.size());
  REQUIRE(back.dim_t() == 5);
  CHECK((back.t() - ds.t()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((back.y() - ds.y()).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK((back.z() - ds.z()).cwiseAbs().maxCoeff() <= 1e-12);

  const std::string text = to_csv_string(ds);
  CHECK(text.rfind("t0,t1,t2,t3,t4,y0,z0\n", 0) == 0);
}

TEST_CASE("csv parse errors carry row numbers") {
  CHECK_THROWS_AS(parse_csv_string(""), ParseError);
  CHECK_THROWS_AS(parse_csv_string("t0,y0,z0\n1,2,nan\n"), ParseError);
  CHECK_THROWS_AS(parse_csv_string("t0,y0,z0\n1,2,inf\n"), ParseError);
  try {
    parse_csv_string("t0,y0,z0\n1,2,3\n4,5\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.row() == 3);
  }
  try {
    parse_csv_string("t0,y0,z0\n1,2,3\n4,abc,6\n");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.row() == 3);
  }
  CHECK_THROWS_AS(parse_csv_string("a,b,c\n1,2,3\n"), ParseError);
  const Dataset ok = parse_csv_string("t0,y0,z0,z1\n1,2,3,4\n-1e-3,0.5,6,7\n");
  CHECK(ok.size() == 2);
  CHECK(ok.dim_z() == 2);
  CHECK(ok.t()(1, 0) == -1e-3);
}

TEST_CASE("permuted reorders every block together") {
  const auto [ds, params] = gen_simple_iv(4, 1);
  Eigen::VectorXi perm(4);
  perm << 2, 0, 3, 1;
  const Dataset p = ds.permuted(perm);
  for (int i = 0; i < 4; ++i) {
    CHECK(p.t()(i, 0) == ds.t()(perm[i], 0));
    CHECK(p.y()(i, 0) == ds.y()(perm[i], 0));
    CHECK(p.z()(i, 0) == ds.z()(perm[i], 0));
  }
}

TEST_CASE("derived seeds separate streams") {
  CHECK(derive_seed(1, streams::train) != derive_seed(1, streams::validation));
  CHECK(derive_seed(1, streams::train) != derive_seed(2, streams::train));
  Rng a(5, 0), b(5, 0), c(5, 1);
  const double x = a.normal();
  CHECK(x == b.normal());
  CHECK(x != c.normal());
}
