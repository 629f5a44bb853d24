#include <cmath>
#include <set>
#include <vector>

#include "doctest.h"

#include "padsim/rng.hpp"
#include "padsim/stats.hpp"

using namespace padsim;

TEST_CASE("philox matches the Random123 known-answer vectors") {
  // kat_vectors: philox4x32 10 rounds
  auto zero = Philox4x32::block({0, 0, 0, 0}, {0, 0});
  CHECK(zero == Philox4x32::Counter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
  auto ones = Philox4x32::block({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff},
                                {0xffffffff, 0xffffffff});
  CHECK(ones == Philox4x32::Counter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
  auto pi = Philox4x32::block({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344},
                              {0xa4093822, 0x299f31d0});
  CHECK(pi == Philox4x32::Counter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("streams are reproducible and independent of draw order elsewhere") {
  Stream a(42, {1, 2, 3});
  Stream b(42, {1, 2, 3});
  Stream other(42, {1, 2, 4});
  for (int i = 0; i < 100; ++i) other.uniform();
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Stream c(42, {1, 2, 3});
  Stream d(43, {1, 2, 3});
  CHECK(c.next_u64() != d.next_u64());

  // a child is a function of the parent's address only
  Stream parent(9, {5});
  auto child1 = parent.child({7});
  parent.uniform();
  auto child2 = parent.child({7});
  CHECK(child1.next_u64() == child2.next_u64());
  CHECK(child1.stream_id() != parent.stream_id());
}

TEST_CASE("uniform and normal draws have the right moments") {
  Stream s(2024, {0});
  const int n = 200000;
  double su = 0, su2 = 0, sn = 0, sn2 = 0;
  double lo = 1, hi = 0;
  for (int i = 0; i < n; ++i) {
    double u = s.uniform();
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    su += u;
    su2 += u * u;
    double z = s.normal();
    sn += z;
    sn2 += z * z;
  }
  CHECK(lo > 0.0);
  CHECK(hi < 1.0);
  // 5 standard errors
  CHECK(std::abs(su / n - 0.5) < 5 * std::sqrt(1.0 / 12 / n));
  CHECK(std::abs(su2 / n - 1.0 / 3) < 5 * std::sqrt(4.0 / 45 / n));
  CHECK(std::abs(sn / n) < 5 / std::sqrt(double(n)));
  CHECK(std::abs(sn2 / n - 1.0) < 5 * std::sqrt(2.0 / n));
}

TEST_CASE("below covers its range without bias") {
  Stream s(1, {0});
  std::vector<int> counts(7, 0);
  const int n = 70000;
  for (int i = 0; i < n; ++i) {
    auto k = s.below(7);
    REQUIRE(k < 7);
    counts[k]++;
  }
  for (int c : counts) CHECK(std::abs(c - 10000) < 5 * std::sqrt(10000 * 6.0 / 7));
}

TEST_CASE("hash paths do not collide on small tag sets") {
  std::set<std::uint64_t> ids;
  for (std::uint64_t a = 0; a < 20; ++a)
    for (std::uint64_t b = 0; b < 20; ++b) ids.insert(hash_path(7, {a, b}));
  CHECK(ids.size() == 400);
  CHECK(hash_path(7, {1, 2}) != hash_path(7, {2, 1}));
}

TEST_CASE("normal cdf and quantile") {
  CHECK(stats::normal_cdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(stats::normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-12));
  CHECK(stats::normal_quantile(0.975) == doctest::Approx(1.959963984540054).epsilon(1e-12));
  CHECK(stats::normal_quantile(0.05) == doctest::Approx(-1.6448536269514722).epsilon(1e-12));
  for (double p : {1e-10, 0.001, 0.2, 0.5, 0.77, 0.999})
    CHECK(stats::normal_cdf(stats::normal_quantile(p)) == doctest::Approx(p).epsilon(1e-10));
  CHECK(stats::two_sided_p(1.959963984540054) == doctest::Approx(0.05).epsilon(1e-10));
  CHECK(stats::two_sided_p(-1.959963984540054) == doctest::Approx(0.05).epsilon(1e-10));
  CHECK(stats::two_sided_p(0.0) == doctest::Approx(1.0));
}

TEST_CASE("type 7 quantiles") {
  auto q = stats::quartiles({10, 20, 30});
  CHECK(q.q1 == doctest::Approx(15));
  CHECK(q.median == doctest::Approx(20));
  CHECK(q.q3 == doctest::Approx(25));
  // R: quantile(c(3,1,4,1,5,9,2,6), c(.25,.5,.75)) = 1.75 3.5 5.25
  auto r = stats::quartiles({3, 1, 4, 1, 5, 9, 2, 6});
  CHECK(r.q1 == doctest::Approx(1.75));
  CHECK(r.median == doctest::Approx(3.5));
  CHECK(r.q3 == doctest::Approx(5.25));
  CHECK(stats::quantile({4.0}, 0.9) == 4.0);
  CHECK(stats::median({2, 8}) == doctest::Approx(5));
  std::vector<double> v{1, 2, 3, 4};
  CHECK(stats::mean(v) == doctest::Approx(2.5));
  CHECK(stats::stddev(v) == doctest::Approx(std::sqrt(5.0 / 3)));
}
