#include <cmath>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "doctest.h"

#include "padsim/datagen.hpp"
#include "padsim/error.hpp"
#include "padsim/inference.hpp"
#include "padsim/rng.hpp"
#include "padsim/stats.hpp"

using namespace padsim;

namespace {

FitResult clda2_fit(double b2, double b4, double v22 = 1e-4, double v44 = 1e-6, double v24 = -5e-6) {
  FitResult f;
  f.model = ModelKind::Clda2;
  f.names = {"intercept", "time", "time:trt", "time2", "time2:trt", "age", "apoe4"};
  f.coefficients = Eigen::VectorXd::Zero(7);
  f.coefficients(2) = b2;
  f.coefficients(4) = b4;
  f.covariance = Eigen::MatrixXd::Identity(7, 7) * 1e-3;
  f.covariance(2, 2) = v22;
  f.covariance(4, 4) = v44;
  f.covariance(2, 4) = f.covariance(4, 2) = v24;
  f.converged = true;
  return f;
}

double quadrature_area(double b2, double b4, double t0, double tT) {
  // fitted treatment-minus-placebo mean curve of the quadratic model
  auto diff = [&](double t) { return b2 * t + b4 * t * t; };
  return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(diff, t0, tT, 15, 1e-14);
}

}  // namespace

TEST_CASE("wald arithmetic") {
  auto c = wald(Estimand::FinalVisit, 0.09, 0.0225);
  CHECK(c.z == doctest::Approx(4.0));
  CHECK(c.p == doctest::Approx(6.334248366623996e-05).epsilon(1e-9));
  auto d = wald(Estimand::FinalVisit, 0.09, 0.045);
  CHECK(d.z == doctest::Approx(c.z / 2));
  auto zero = wald(Estimand::FinalVisit, 0.0, 0.0);
  CHECK(zero.p == 1.0);
  auto hr = wald(Estimand::LogHazardRatio, -0.35, 0.10);
  CHECK(hr.hazard_ratio == doctest::Approx(std::exp(-0.35)));
  CHECK(hr.hazard_ratio == doctest::Approx(0.705).epsilon(1e-3));
  CHECK(hr.z == doctest::Approx(-3.5));
  CHECK(wald(Estimand::LogHazardRatio, 0.35, 0.10).p == hr.p);
  CHECK_THROWS_AS(wald(Estimand::FinalVisit, 1.0, -1.0), FitError);
  CHECK_THROWS_AS(wald(Estimand::FinalVisit, 1.0, NAN), FitError);
  CHECK_THROWS_AS(wald(Estimand::FinalVisit, 1.0, 0.0), FitError);
  CHECK(estimand_from_name("area_between_curves") == Estimand::AreaBetweenCurves);
  CHECK_THROWS_AS(estimand_from_name("auc"), ConfigError);
}

TEST_CASE("p-values stay in range and are two-sided") {
  Stream rng(1, {0});
  for (int i = 0; i < 1000; ++i) {
    const double e = 3 * rng.normal();
    const double s = 0.01 + rng.uniform();
    auto a = wald(Estimand::FinalVisit, e, s);
    auto b = wald(Estimand::FinalVisit, -e, s);
    CHECK(a.p >= 0.0);
    CHECK(a.p <= 1.0);
    CHECK(a.p == b.p);
    CHECK(a.p == doctest::Approx(2 * (1 - stats::normal_cdf(std::abs(a.z)))).epsilon(1e-12));
  }
}

TEST_CASE("area between curves matches quadrature") {
  auto a = area_between_curves(clda2_fit(0.1, 0.0), 0.0, 4.5);
  CHECK(a.estimate == doctest::Approx(1.0125).epsilon(1e-12));
  CHECK(std::abs(a.estimate - quadrature_area(0.1, 0.0, 0.0, 4.5)) < 1e-10);
  auto b = area_between_curves(clda2_fit(0.0, 0.03), 0.0, 3.0);
  CHECK(b.estimate == doctest::Approx(0.27).epsilon(1e-12));
  CHECK(std::abs(b.estimate - quadrature_area(0.0, 0.03, 0.0, 3.0)) < 1e-10);
  auto z = area_between_curves(clda2_fit(0.0, 0.0), 0.0, 4.5);
  CHECK(z.estimate == 0.0);
  CHECK(z.p == 1.0);

  Stream rng(2, {0});
  for (int i = 0; i < 200; ++i) {
    const double b2 = 0.2 * rng.normal(), b4 = 0.05 * rng.normal();
    const double t0 = 2 * rng.uniform(), tT = t0 + 6 * rng.uniform();
    auto r = area_between_curves(clda2_fit(b2, b4), t0, tT);
    CHECK(std::abs(r.estimate - quadrature_area(b2, b4, t0, tT)) < 1e-10);
  }
}

TEST_CASE("area variance is the quadratic form on the slope block") {
  auto f = clda2_fit(0.05, 0.01, 4e-4, 2e-5, -3e-5);
  auto r = area_between_curves(f, 0.0, 4.5);
  Eigen::Vector2d c(0.5 * 4.5 * 4.5, 4.5 * 4.5 * 4.5 / 3);
  Eigen::Matrix2d v;
  v << 4e-4, -3e-5, -3e-5, 2e-5;
  CHECK(r.se == doctest::Approx(std::sqrt(c.dot(v * c))).epsilon(1e-12));
}

TEST_CASE("final visit contrasts per model") {
  FitResult c1;
  c1.model = ModelKind::Clda1;
  c1.names = {"intercept", "time", "time:trt", "age", "apoe4"};
  c1.coefficients = Eigen::VectorXd::Zero(5);
  c1.coefficients(2) = 0.02;
  c1.covariance = Eigen::MatrixXd::Identity(5, 5) * 0.005 * 0.005;
  c1.converged = true;
  auto r = final_visit_contrast(c1, 4.5);
  CHECK(r.estimate == doctest::Approx(0.09));
  CHECK(r.se == doctest::Approx(0.0225));
  CHECK(r.z == doctest::Approx(4.0));
  CHECK(primary_contrast(c1).estimate == r.estimate);

  FitResult m;
  m.model = ModelKind::Mmrm;
  m.names = {"visit_0.5", "visit_1", "trt:visit_0.5", "trt:visit_1", "baseline"};
  m.coefficients = Eigen::VectorXd::LinSpaced(5, 1, 5);
  m.covariance = Eigen::VectorXd::LinSpaced(5, 1, 5).asDiagonal();
  m.converged = true;
  auto mr = final_visit_contrast(m);
  CHECK(mr.estimate == 4.0);
  CHECK(mr.se == doctest::Approx(2.0));

  auto q = clda2_fit(0.1, 0.01);
  CHECK(final_visit_contrast(q, 4.5).estimate == doctest::Approx(0.45 + 0.2025));
  CHECK(primary_contrast(q).estimand == Estimand::AreaBetweenCurves);

  c1.converged = false;
  CHECK_THROWS_AS(final_visit_contrast(c1), FitError);
  FitResult cox;
  cox.model = ModelKind::Cox;
  cox.converged = true;
  CHECK_THROWS_AS(final_visit_contrast(cox), FitError);
  CHECK_THROWS_AS(area_between_curves(c1, 0, 1), FitError);
}

TEST_CASE("hazard contrast flips under arm relabeling") {
  FitResult f;
  f.model = ModelKind::Cox;
  f.names = {"treatment", "age", "apoe4"};
  f.coefficients = Eigen::Vector3d(-0.35, 0.02, 0.3);
  f.covariance = Eigen::Vector3d(0.01, 1e-4, 0.01).asDiagonal();
  f.converged = true;
  auto a = hazard_contrast(f);
  f.coefficients(0) = 0.35;
  auto b = hazard_contrast(f);
  CHECK(a.estimate == -b.estimate);
  CHECK(std::abs(a.z) == std::abs(b.z));
  CHECK(a.hazard_ratio * b.hazard_ratio == doctest::Approx(1.0));
  f.converged = false;
  f.message = "monotone likelihood";
  CHECK_THROWS_AS(hazard_contrast(f), FitError);
}

TEST_CASE("mehrotra mixture arithmetic") {
  auto base = wald(Estimand::FinalVisit, 0.2, 0.05);
  auto same = mehrotra_combine(base, 0.0, 500);
  CHECK(same.estimate == base.estimate);
  CHECK(same.se == base.se);
  auto mixed = mehrotra_combine(base, 0.25, 400);
  CHECK(mixed.estimate == doctest::Approx(0.15));
  CHECK(mixed.se == doctest::Approx(std::sqrt(0.75 * 0.75 * 0.0025 + 0.04 * 0.25 * 0.75 / 400)));
  // equal components: nothing to mix
  auto none = mehrotra_combine(wald(Estimand::FinalVisit, 0.0, 0.05), 0.4, 400);
  CHECK(none.estimate == 0.0);
  CHECK_THROWS_AS(mehrotra_combine(base, 1.0, 10), FitError);
  CHECK_THROWS_AS(mehrotra_combine(base, 0.1, 0), FitError);
}

namespace {

LongitudinalDataset small_trial(bool with_dropout, std::uint64_t seed) {
  LongitudinalDataset d;
  d.visit_grid = TrialDesign::default_visit_grid();
  d.horizon = 4.5;
  Stream rng(seed, {0});
  for (int id = 0; id < 200; ++id) {
    const Arm arm = id % 2 ? Arm::Treatment : Arm::Placebo;
    const double age = 70 + 5 * rng.normal();
    const int apoe = rng.uniform() < 0.5;
    const double b0 = rng.normal(), b1 = 0.1 * rng.normal();
    const double slope = arm == Arm::Treatment ? -0.14 : -0.2;
    const int last = with_dropout && arm == Arm::Treatment && id % 5 == 1 ? 3 : 9;
    const double base = b0 + 0.3 * rng.normal();
    for (int k = 0; k <= last; ++k) {
      const double t = 0.5 * k;
      const double y = k == 0 ? base : b0 + (slope + b1) * t + 0.3 * rng.normal();
      d.rows.push_back({id, arm, t, y, base, age, apoe});
    }
  }
  return d;
}

}  // namespace

TEST_CASE("mehrotra adjustment on a dataset") {
  auto full = small_trial(false, 3);
  for (ModelKind m : {ModelKind::Mmrm, ModelKind::Clda1, ModelKind::Clda2}) {
    auto adj = mehrotra_adjust(full, m);
    CHECK(adj.dropout_fraction == 0.0);
    FitResult base = m == ModelKind::Mmrm ? fit_mmrm(full) : fit_clda(full, m == ModelKind::Clda1 ? 1 : 2);
    CHECK(adj.contrast.estimate == doctest::Approx(primary_contrast(base).estimate).epsilon(1e-10));
    CHECK(adj.contrast.se == doctest::Approx(primary_contrast(base).se).epsilon(1e-10));
  }
  auto drop = small_trial(true, 3);
  auto adj = mehrotra_adjust(drop, ModelKind::Clda1);
  CHECK(adj.n_treated == 100);
  CHECK(adj.dropout_fraction == doctest::Approx(0.2));
  CHECK(adj.contrast.estimate == doctest::Approx(0.8 * adj.completer_contrast.estimate));
  // the fit excludes every treated dropout
  CHECK(adj.fit.subjects == 180);
  CHECK_THROWS_AS(mehrotra_adjust(drop, ModelKind::Cox), FitError);
}
