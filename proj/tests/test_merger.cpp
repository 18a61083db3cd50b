#include <catch_amalgamated.hpp>

#include <random>

#include "xcorr/merger.hpp"

using namespace xcorr;
using Catch::Approx;

TEST_CASE("equal-mass merger with equal speeds doubles the size") {
  const auto r = merger_ratios({1.0, 1.0});
  CHECK(r.v2_ratio == 1.0);
  CHECK(r.size_ratio == 2.0);
  CHECK(r.density_ratio == 0.25);
}

TEST_CASE("equal-mass merger with cold accreted material quadruples the size") {
  const auto r = merger_ratios({1.0, 0.0});
  CHECK(r.v2_ratio == 0.5);
  CHECK(r.size_ratio == 4.0);
  CHECK(r.density_ratio == 1.0 / 32.0);
}

TEST_CASE("no accretion changes nothing") {
  for (double eps : {0.0, 0.3, 1.0, 7.5}) {
    const auto r = merger_ratios({0.0, eps});
    CHECK(r.v2_ratio == 1.0);
    CHECK(r.size_ratio == 1.0);
    CHECK(r.density_ratio == 1.0);
  }
}

TEST_CASE("invalid parameters") {
  CHECK_THROWS_AS(merger_ratios({-0.1, 1.0}), InvalidArgument);
  CHECK_THROWS_AS(merger_ratios({1.0, -1.0}), InvalidArgument);
  CHECK_THROWS_AS(merger_ratios({std::nan(""), 1.0}), InvalidArgument);
  CHECK_THROWS_AS(invert_for_eta(0.0, 1.0), InvalidArgument);
  CHECK_THROWS_AS(invert_for_eta(0.5, 0.0), InvalidArgument);  // shrinking is impossible for eps <= 1
}

TEST_CASE("virial identities hold for random parameters") {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> eta(0.0, 10.0), eps(0.0, 3.0);
  for (int i = 0; i < 1000; ++i) {
    const MergerParams p{eta(gen), eps(gen)};
    const auto r = merger_ratios(p);
    CHECK(r.density_ratio * r.size_ratio * r.size_ratio * r.size_ratio == Approx(1.0 + p.eta).epsilon(1e-12));
    CHECK(r.v2_ratio * r.size_ratio == Approx(1.0 + p.eta).epsilon(1e-12));
    CHECK(r.v2_ratio > 0.0);
    CHECK(r.size_ratio > 0.0);
    CHECK(r.density_ratio > 0.0);
  }
}

TEST_CASE("size grows with the mass ratio when eps < 1") {
  for (double eps : {0.0, 0.25, 0.5, 0.99}) {
    double prev = 0.0;
    for (double eta = 0.0; eta < 5.0; eta += 0.05) {
      const double s = merger_ratios({eta, eps}).size_ratio;
      CHECK(s > prev);
      prev = s;
    }
  }
}

TEST_CASE("inversion") {
  CHECK(invert_for_eta(4.0, 0.0) == Approx(1.0).epsilon(1e-15));
  CHECK(invert_for_eta(2.0, 1.0) == Approx(1.0).epsilon(1e-15));
  for (double eps : {0.0, 0.4, 1.0, 2.0}) CHECK(invert_for_eta(1.0, eps) == 0.0);

  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> eta(0.0, 10.0), eps(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const MergerParams p{eta(gen), eps(gen)};
    const double back = invert_for_eta(merger_ratios(p).size_ratio, p.epsilon);
    CHECK(std::fabs(back - p.eta) <= 1e-12 * std::max(1.0, p.eta));
  }
}

TEST_CASE("JSON form") {
  const MergerParams p{1.0, 1.0};
  const auto j = to_json(p, merger_ratios(p));
  CHECK(j.at("schema_version") == 1);
  CHECK(j.at("size_ratio") == 2.0);
  CHECK(j.at("density_ratio") == 0.25);
}
