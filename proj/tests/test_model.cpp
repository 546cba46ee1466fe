#include <cmath>
#include <random>
#include <sstream>
#include <string>

#include "betamix/error.hpp"
#include "betamix/model.hpp"
#include "doctest.h"
#include "scratch.hpp"

using namespace betamix;

namespace {

// 16 plants x 4 quarters x 3 locations with two blanked responses.
std::string iqa_like_csv(int rows) {
  std::ostringstream s;
  s << "plant,quarter,y,down,res\n";
  for (int i = 0; i < rows; ++i) {
    const int plant = i / 12, quarter = (i / 3) % 4, loc = i % 3;
    s << "P" << plant << ",Q" << quarter + 1 << ",";
    if (i != 17 && i != 101) s << 0.05 + 0.9 * ((i * 37) % 101) / 100.0;
    s << "," << (loc == 1) << "," << (loc == 2) << "\n";
  }
  return s.str();
}

CsvSchema iqa_schema() {
  CsvSchema s;
  s.response = "y";
  s.covariates = {"down", "res"};
  s.group = "plant";
  s.subgroup = "quarter";
  return s;
}

Dataset toy_data() {
  Dataset d;
  d.covariate_names = {"(Intercept)", "x"};
  d.group_labels = {"a", "b"};
  d.subgroup_labels = {"s1", "s2", "s3"};
  d.records = {{0.3, {1.0, 0.5}, 0, 0}, {0.6, {1.0, -1.2}, 0, 2}, {0.45, {1.0, 2.0}, 1, 1}};
  return d;
}

}  // namespace

TEST_CASE("CSV ingest drops blank responses and counts them") {
  testing::ScratchDir dir("ingest");
  const auto path = dir.write("iqa.csv", iqa_like_csv(190));
  const Dataset d = ingest_csv(path, iqa_schema());
  CHECK(d.n() == 188);
  CHECK(d.dropped_count == 2);
  CHECK(d.n_groups() == 16);
  CHECK(d.subgroup_labels.size() == 4);
  CHECK(d.covariate_names == std::vector<std::string>{"(Intercept)", "down", "res"});
  CHECK(d.group_labels.front() == "P0");
  CHECK_NOTHROW(d.validate());
}

TEST_CASE("responses outside (0,1) are rejected with the row number") {
  testing::ScratchDir dir("bad");
  const auto path = dir.write("bad.csv", "plant,quarter,y,down,res\nP1,Q1,0.4,0,0\nP1,Q2,1.2,1,0\n");
  try {
    (void)ingest_csv(path, iqa_schema());
    FAIL("expected DataError");
  } catch (const DataError& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
  const auto text = dir.write("text.csv", "plant,quarter,y,down,res\nP1,Q1,abc,0,0\n");
  CHECK_THROWS_AS(ingest_csv(text, iqa_schema()), DataError);
  const auto ragged = dir.write("ragged.csv", "plant,quarter,y,down,res\nP1,Q1,0.3,0\n");
  CHECK_THROWS_AS(ingest_csv(ragged, iqa_schema()), DataError);
  CsvSchema missing_col = iqa_schema();
  missing_col.covariates.push_back("nope");
  CHECK_THROWS_AS(ingest_csv(path, missing_col), DataError);
}

TEST_CASE("write_csv round-trips through ingest_csv") {
  testing::ScratchDir dir("roundtrip");
  const Dataset d = ingest_csv(dir.write("in.csv", iqa_like_csv(60)), iqa_schema());
  Record blank = d.records.front();
  const auto out = dir / "out.csv";
  write_csv(out, d, std::span<const Record>(&blank, 1));
  const Dataset back = ingest_csv(out, iqa_schema());
  CHECK(back.n() == d.n());
  CHECK(back.dropped_count == 1);
  CHECK(back.fingerprint() == d.fingerprint());
  CHECK(back.group_labels == d.group_labels);
}

TEST_CASE("validate catches broken invariants") {
  Dataset d = toy_data();
  CHECK_NOTHROW(d.validate());
  d.records[1].y = 1.0;
  CHECK_THROWS_AS(d.validate(), DataError);
  d = toy_data();
  d.records[0].x.pop_back();
  CHECK_THROWS_AS(d.validate(), DataError);
  d = toy_data();
  d.records[2].group = 5;
  CHECK_THROWS_AS(d.validate(), DataError);
  CHECK_THROWS_AS(toy_data().covariate_index("z"), DataError);
}

TEST_CASE("covariance matrices per kind") {
  CovStructure c;
  CHECK(cov_matrix(c).sigma.size() == 0);

  c.kind = CovKind::Intercept;
  c.precisions = {4.0};
  auto f = cov_matrix(c);
  CHECK(f.sigma(0, 0) == doctest::Approx(0.25));
  CHECK(f.log_det == doctest::Approx(std::log(0.25)));

  c.kind = CovKind::InterceptSlope;
  c.precisions = {4.0, 25.0};
  c.rho = -0.6;
  f = cov_matrix(c);
  CHECK(f.sigma(0, 1) == doctest::Approx(-0.6 * 0.5 * 0.2));
  CHECK(f.sigma(1, 1) == doctest::Approx(0.04));
  CHECK((f.chol * f.chol.transpose() - f.sigma).norm() < 1e-14);
  CHECK((f.precision * f.sigma - MatrixXd::Identity(2, 2)).norm() < 1e-12);
  CHECK(f.log_det == doctest::Approx(std::log(f.sigma.determinant())));
  c.rho = 1.0;
  CHECK_THROWS_AS(cov_matrix(c), DomainError);

  c.kind = CovKind::Nested;
  c.subgroups = 4;
  c.rho = 0.0;
  c.precisions = {2.0, 10.0};
  f = cov_matrix(c);
  CHECK(f.sigma.rows() == 5);
  CHECK(f.sigma(0, 0) == doctest::Approx(0.5));
  CHECK(f.sigma(4, 4) == doctest::Approx(0.1));
  CHECK(f.sigma(0, 4) == 0.0);
  c.group_effect = false;
  c.precisions = {10.0};
  f = cov_matrix(c);
  CHECK(f.sigma.rows() == 4);
  CHECK(f.log_det == doctest::Approx(4 * std::log(0.1)));
  c.precisions = {-1.0};
  CHECK_THROWS_AS(cov_matrix(c), DomainError);
}

TEST_CASE("model spec layout, names and random design rows") {
  const Dataset d = toy_data();
  auto s = ModelSpec::make(d, {"(Intercept)", "x"}, CovKind::InterceptSlope, Link(), "x");
  CHECK(s.q_b() == 2);
  CHECK(s.n_params() == 6);
  CHECK(s.parameter_names() == std::vector<std::string>{"(Intercept)", "x", "phi", "tau2_1", "tau2_2", "rho"});
  double z[5];
  s.z_row(d.records[1], std::span<double>(z, 2));
  CHECK(z[0] == 1.0);
  CHECK(z[1] == -1.2);

  auto n = ModelSpec::make(d, {"(Intercept)"}, CovKind::Nested);
  CHECK(n.q_b() == 4);
  CHECK(n.cov_parameter_names() == std::vector<std::string>{"tau2_U", "tau2_UT"});
  n.z_row(d.records[1], std::span<double>(z, 4));
  CHECK(z[0] == 1.0);
  CHECK(z[1] == 0.0);
  CHECK(z[3] == 1.0);

  auto m = ModelSpec::make(d, {"(Intercept)"}, CovKind::Nested, Link(), {}, false);
  CHECK(m.q_b() == 3);
  CHECK(m.cov_parameter_names() == std::vector<std::string>{"tau2_UT"});
  m.z_row(d.records[2], std::span<double>(z, 3));
  CHECK(z[0] == 0.0);
  CHECK(z[1] == 1.0);

  CHECK_THROWS_AS(ModelSpec::make(d, {"(Intercept)"}, CovKind::InterceptSlope), DataError);
  CHECK_THROWS_AS(ModelSpec::make(d, {"w"}), DataError);
  CHECK(cov_kind_from_name(cov_kind_name(CovKind::Nested)) == CovKind::Nested);
  CHECK_THROWS_AS(cov_kind_from_name("ar1"), DomainError);
}

TEST_CASE("parameter vectors round-trip between scales") {
  const Dataset d = toy_data();
  const auto s = ModelSpec::make(d, {"(Intercept)", "x"}, CovKind::InterceptSlope, Link(), "x");
  VectorXd rep(6);
  rep << 0.4, -0.2, 42.0, 11.0, 3.5, -0.3;
  const auto theta = ParamVector::from_reporting(s, rep);
  CHECK(theta.phi() == doctest::Approx(42.0));
  CHECK(theta.cov_raw()(0) == doctest::Approx(-std::log(11.0)));
  CHECK(theta.cov_raw()(2) == doctest::Approx(std::atanh(-0.3)));
  CHECK((theta.to_reporting(s) - rep).norm() < 1e-13);
  CHECK(ParamVector::unpack(s, theta.pack()) == theta);
  const auto cov = theta.cov(s);
  CHECK(cov.precisions[1] == doctest::Approx(3.5));
  CHECK(cov.rho == doctest::Approx(-0.3));

  VectorXd bad = rep;
  bad(2) = -1.0;
  CHECK_THROWS_AS(ParamVector::from_reporting(s, bad), DomainError);
  bad = rep;
  bad(5) = 1.5;
  CHECK_THROWS_AS(ParamVector::from_reporting(s, bad), DomainError);
  CHECK_THROWS_AS(ParamVector::unpack(s, VectorXd::Zero(4)), DomainError);
}

TEST_CASE("reporting Jacobian agrees with finite differences") {
  const Dataset d = toy_data();
  const auto s = ModelSpec::make(d, {"(Intercept)", "x"}, CovKind::InterceptSlope, Link(), "x");
  VectorXd u(6);
  u << 0.1, 0.7, 3.2, -1.4, 0.9, 0.45;
  const auto theta = ParamVector::unpack(s, u);
  const VectorXd j = reporting_jacobian(s, theta);
  for (int k = 0; k < 6; ++k) {
    VectorXd up = u, dn = u;
    const double h = 1e-6;
    up(k) += h;
    dn(k) -= h;
    const double fd = (ParamVector::unpack(s, up).to_reporting(s)(k) - ParamVector::unpack(s, dn).to_reporting(s)(k)) /
                      (2 * h);
    CHECK(j(k) == doctest::Approx(fd).epsilon(1e-7));
  }
}

TEST_CASE("linear predictor adds the random part") {
  const Dataset d = toy_data();
  const auto s = ModelSpec::make(d, {"(Intercept)", "x"}, CovKind::InterceptSlope, Link(), "x");
  VectorXd beta(2), b(2);
  beta << 0.2, 0.5;
  b << -0.1, 0.3;
  const auto p = linear_predictor(s, beta, b, d.records[0]);
  CHECK(p.eta == doctest::Approx(0.2 + 0.25 - 0.1 + 0.15));
  CHECK(p.mu == doctest::Approx(1.0 / (1.0 + std::exp(-p.eta))));
  CHECK_THROWS_AS(linear_predictor(s, VectorXd::Zero(3), b, d.records[0]), DomainError);
}

TEST_CASE("reference covariance and predictor values") {
  CovStructure c;
  c.kind = CovKind::Intercept;
  c.precisions = {62.36};
  CHECK(cov_matrix(c).sigma(0, 0) == doctest::Approx(0.016037).epsilon(1e-4));
  c.kind = CovKind::InterceptSlope;
  c.precisions = {3.0, 7.0};
  c.rho = 0.0;
  CHECK(cov_matrix(c).sigma(0, 1) == 0.0);
  c.kind = CovKind::Nested;
  c.precisions = {43.54, 15.04};
  c.subgroups = 4;
  const auto f = cov_matrix(c);
  CHECK(f.sigma.rows() == 5);
  CHECK((f.sigma - MatrixXd(f.sigma.diagonal().asDiagonal())).norm() == 0.0);

  Dataset d;
  d.covariate_names = {"(Intercept)", "reservoir", "downstream"};
  d.group_labels = {"p"};
  d.records = {{0.5, {1.0, 1.0, 0.0}, 0, -1}};
  const auto s = ModelSpec::make(d, d.covariate_names);
  VectorXd beta(3);
  beta << 1.15, 0.24, 0.15;
  const auto p = linear_predictor(s, beta, VectorXd(), d.records[0]);
  CHECK(p.eta == doctest::Approx(1.39));
  CHECK(std::abs(p.mu - 0.8006) < 1e-4);

  const auto is = ModelSpec::make(d, {"(Intercept)"}, CovKind::Intercept);
  VectorXd b0(1), b1(1);
  b0 << 0.0;
  b1 << 0.0;
  VectorXd beta0(1);
  beta0 << 0.3;
  CHECK(linear_predictor(is, beta0, b0, d.records[0]).eta == 0.3);
}

TEST_CASE("random covariance parameters always factor") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> logt(-12.0, 12.0), r(-0.999, 0.999);
  for (int i = 0; i < 10000; ++i) {
    CovStructure c;
    c.kind = CovKind::InterceptSlope;
    c.precisions = {std::exp(logt(rng)), std::exp(logt(rng))};
    c.rho = r(rng);
    const auto f = cov_matrix(c);
    REQUIRE(f.chol.allFinite());
    REQUIRE(Eigen::SelfAdjointEigenSolver<MatrixXd>(f.sigma).eigenvalues().minCoeff() > 0.0);
  }
}

TEST_CASE("pack and unpack are inverse on random vectors") {
  const Dataset d = toy_data();
  const auto s = ModelSpec::make(d, {"(Intercept)", "x"}, CovKind::InterceptSlope, Link(), "x");
  std::mt19937_64 rng(5);
  std::normal_distribution<double> z(0.0, 3.0);
  for (int i = 0; i < 10000; ++i) {
    VectorXd u(6);
    for (int k = 0; k < 6; ++k) u(k) = z(rng);
    u(5) /= 2.0;
    const auto theta = ParamVector::unpack(s, u);
    REQUIRE(theta.pack() == u);
    REQUIRE((ParamVector::from_reporting(s, theta.to_reporting(s)).pack() - u).cwiseAbs().maxCoeff() < 1e-9);
  }
}
