#include <cmath>
#include <limits>

#include "doctest.h"

#include "padsim/error.hpp"
#include "padsim/stats.hpp"
#include "padsim/transforms.hpp"

using namespace padsim;
using namespace padsim::transforms;

namespace {
const double kNaN = std::numeric_limits<double>::quiet_NaN();
}

TEST_CASE("weighted ecdf z uses mid-ranks and clamps the tails") {
  // values 1..4 equal weight: mid-ranks 1/8, 3/8, 5/8, 7/8
  auto ref = ReferenceDistribution::from_sample(Outcome::Cdrsb, {4, 2, 3, 1});
  CHECK(weighted_ecdf_z(2, ref) == doctest::Approx(stats::normal_quantile(3.0 / 8)));
  CHECK(weighted_ecdf_z(4, ref) == doctest::Approx(stats::normal_quantile(7.0 / 8)));
  // below everything: q = 0 clamps to 1/(2n)
  CHECK(weighted_ecdf_z(-10, ref) == doctest::Approx(stats::normal_quantile(1.0 / 8)));
  CHECK(weighted_ecdf_z(99, ref) == doctest::Approx(stats::normal_quantile(7.0 / 8)));
  // between knots
  CHECK(weighted_ecdf_z(2.5, ref) == doctest::Approx(stats::normal_quantile(0.5)));
}

TEST_CASE("weights and ties enter the mid-rank") {
  auto ref = ReferenceDistribution::from_sample(Outcome::Faq, {0, 0, 1, 5}, {1, 1, 1, 2});
  // weights 0.2 0.2 0.2 0.4; tie at 0 has mid-rank 0.2
  CHECK(weighted_ecdf_z(0, ref) == doctest::Approx(stats::normal_quantile(0.2)));
  CHECK(weighted_ecdf_z(1, ref) == doctest::Approx(stats::normal_quantile(0.5)));
  CHECK(weighted_ecdf_z(5, ref) == doctest::Approx(stats::normal_quantile(0.8)));
}

TEST_CASE("orientation flips the z sign for better-is-higher outcomes") {
  auto up = ReferenceDistribution::from_sample(Outcome::LogMem, {1, 2, 3, 4, 5}, {}, false, true);
  auto down = ReferenceDistribution::from_sample(Outcome::LogMem, {1, 2, 3, 4, 5}, {}, false, false);
  for (double v : {1.0, 2.0, 3.5, 5.0})
    CHECK(weighted_ecdf_z(v, down) == doctest::Approx(-weighted_ecdf_z(v, up)));
}

TEST_CASE("z_to_raw inverts the ecdf on knots and snaps integers") {
  auto ref = ReferenceDistribution::from_sample(Outcome::Cdrsb, {0, 1, 2, 4, 7});
  for (double v : ref.sorted_values) CHECK(z_to_raw(weighted_ecdf_z(v, ref), ref) == doctest::Approx(v));
  // halfway between the mid-ranks of 2 and 4
  double z = stats::normal_quantile(0.6);
  CHECK(z_to_raw(z, ref) == doctest::Approx(3.0));
  CHECK(z_to_raw(-8, ref) == 0.0);
  CHECK(z_to_raw(8, ref) == 7.0);

  auto ints = ReferenceDistribution::from_sample(Outcome::Mmse, {24, 27, 30}, {}, true, false);
  for (double zz = -3; zz <= 3; zz += 0.25) {
    double r = z_to_raw(zz, ints);
    CHECK((r == 24 || r == 27 || r == 30));
  }
  // property: monotone
  double prev = -1e300;
  for (double zz = 3; zz >= -3; zz -= 0.1) {
    double r = z_to_raw(zz, ints);
    CHECK(r >= prev);
    prev = r;
  }
}

TEST_CASE("bad references are rejected") {
  CHECK_THROWS_AS(ReferenceDistribution::from_sample(Outcome::Faq, {}), ConfigError);
  CHECK_THROWS_AS(ReferenceDistribution::from_sample(Outcome::Faq, {1, 2}, {1, 0}), ConfigError);
  CHECK_THROWS_AS(ReferenceDistribution::from_sample(Outcome::Faq, {1, 2}, {1}), ConfigError);
  ReferenceDistribution r;
  r.sorted_values = {2, 1};
  r.weights = {0.5, 0.5};
  CHECK_THROWS_AS(r.validate(), ConfigError);
  r.sorted_values = {1, 2};
  r.weights = {0.5, 0.6};
  CHECK_THROWS_AS(r.validate(), ConfigError);
}

TEST_CASE("pacc averages oriented standardized components") {
  auto s = BaselineStats::z_scale();
  // impairment-positive z inputs: pacc is minus their mean
  auto p = compute_pacc({1.0, 2.0, -1.0, 0.0}, s);
  REQUIRE(p);
  CHECK(*p == doctest::Approx(-0.5));
  auto partial = compute_pacc({kNaN, 2.0, kNaN, 0.0}, s);
  REQUIRE(partial);
  CHECK(*partial == doctest::Approx(-1.0));
  CHECK_FALSE(compute_pacc({kNaN, kNaN, kNaN, kNaN}, s));

  auto raw = BaselineStats::raw_scale();
  raw.components[0] = {4.0, 2.0, -1, false};
  raw.components[1] = {10.0, 5.0, +1, false};
  raw.components[2] = {std::log(80.0), 0.5, -1, true};
  raw.components[3] = {28.0, 1.0, +1, false};
  auto q = compute_pacc({6.0, 5.0, 80.0, 29.0}, raw);
  // -(6-4)/2 + (5-10)/5 - 0 + 1 = -1
  CHECK(*q == doctest::Approx(-1.0 / 4));
}

TEST_CASE("baseline stats estimate skips missing values") {
  Eigen::MatrixXd b(3, 4);
  b << 1, 2, 3, 4,
       3, kNaN, 5, 6,
       5, 6, 7, 8;
  auto s = BaselineStats::estimate(b, BaselineStats::z_scale());
  CHECK(s.components[0].mean == doctest::Approx(3));
  CHECK(s.components[0].sd == doctest::Approx(2));
  CHECK(s.components[1].mean == doctest::Approx(4));
  CHECK(s.components[1].sd == doctest::Approx(std::sqrt(8.0)));
  CHECK(s.components[0].orientation == -1);
  Eigen::MatrixXd tiny(1, 4);
  tiny << 1, 2, 3, 4;
  CHECK_THROWS_AS(BaselineStats::estimate(tiny, BaselineStats::z_scale()), DataError);
}
