#include <catch_amalgamated.hpp>

#include <random>

#include "oracles.hpp"
#include "xcorr/ranktest.hpp"

using namespace xcorr;
using Catch::Approx;

namespace {

Eigen::MatrixXd column(std::initializer_list<double> v) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) m(i++, 0) = x;
  return m;
}

using Groups = std::vector<std::vector<std::vector<double>>>;

RankTestInput to_input(const Groups& g) {
  RankTestInput in;
  for (const auto& grp : g) {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(grp.size()), static_cast<Eigen::Index>(grp.front().size()));
    for (std::size_t a = 0; a < grp.size(); ++a) {
      for (std::size_t i = 0; i < grp[a].size(); ++i) {
        m(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(i)) = grp[a][i];
      }
    }
    in.groups.push_back(m);
  }
  return in;
}

Groups random_groups(std::mt19937_64& gen, std::size_t c, std::size_t n_k, std::size_t p, double shift = 0.0) {
  std::normal_distribution<double> g(0.0, 1.0);
  Groups out(c);
  for (std::size_t k = 0; k < c; ++k) {
    out[k].resize(n_k);
    for (auto& x : out[k]) {
      x.resize(p);
      for (auto& v : x) v = g(gen) + (k == 0 ? shift : 0.0);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("component-wise ranks") {
  RankTestInput in;
  in.groups = {column({3.0, 1.0}), column({2.0})};
  const auto r = componentwise_ranks(in);
  CHECK(r.ranks(0, 0) == 3.0);
  CHECK(r.ranks(0, 1) == 1.0);
  CHECK(r.ranks(0, 2) == 2.0);
  CHECK(r.tie_groups[0] == 0);
  CHECK(r.group_sizes == std::vector<std::size_t>{2, 1});

  RankTestInput tied;
  tied.groups = {column({5.0}), column({5.0})};
  const auto t = componentwise_ranks(tied);
  CHECK(t.ranks(0, 0) == 1.5);
  CHECK(t.ranks(0, 1) == 1.5);
  CHECK(t.tie_groups[0] == 1);

  const auto res = statistic_LN([] {
    RankTestInput x;
    x.groups = {column({5.0, 1.0}), column({5.0, 2.0})};
    return x;
  }());
  CHECK(res.warnings.size() == 1);
  CHECK(to_json(res).at("warnings").size() == 1);
}

TEST_CASE("rank sums and score bounds") {
  std::mt19937_64 gen(1);
  std::uniform_int_distribution<int> small(0, 5);
  for (int trial = 0; trial < 50; ++trial) {
    auto g = random_groups(gen, 2 + trial % 3, 3 + trial % 5, 1 + trial % 3);
    if (trial % 2) {
      for (auto& grp : g) {
        for (auto& x : grp) x[0] = small(gen);  // force ties
      }
    }
    const auto in = to_input(g);
    const auto r = componentwise_ranks(in);
    const double n = static_cast<double>(in.total());
    for (Eigen::Index i = 0; i < r.ranks.rows(); ++i) CHECK(r.ranks.row(i).sum() == n * (n + 1) / 2);
    const auto s = rank_scores(r);
    CHECK(s.minCoeff() > 0.0);
    CHECK(s.maxCoeff() < 1.0);
    if (trial % 2 == 0) {
      for (Eigen::Index i = 0; i < s.rows(); ++i) CHECK(s.row(i).mean() == Approx(0.5).epsilon(1e-15));
    }
  }
}

TEST_CASE("scores are rank/(N+1)") {
  RankTestInput in;
  in.groups = {column({10.0, 30.0}), column({20.0})};
  const auto s = rank_scores(componentwise_ranks(in));
  CHECK(s(0, 2) == 0.5);
}

TEST_CASE("balanced groups give a zero statistic") {
  RankTestInput in;
  in.groups = {column({1.0, 4.0}), column({2.0, 3.0})};
  const auto r = statistic_LN(in);
  CHECK(r.statistic == 0.0);
  CHECK(mckeon_pvalue(0.0, 1, 2, 40).p_value == 1.0);
}

TEST_CASE("statistic matches the direct formula") {
  const Groups hand{{{1}, {3}, {5}}, {{2}, {4}, {6}}};
  const double lhs = statistic_LN(to_input(hand)).statistic;
  // Scores k/7; T_1 = 3/7, T_2 = 4/7, mean 1/2, V = (91/6)/49 - 1/4 = 35/12/49.
  const double v = (91.0 / 6.0) / 49.0 - 0.25;
  const double d = 1.0 / 14.0;
  CHECK(lhs == Approx(3.0 * 2.0 * d * d / v).epsilon(1e-13));
  CHECK(lhs == Approx(oracle::rank_statistic(hand)).epsilon(1e-13));

  std::mt19937_64 gen(2);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t c = 2 + static_cast<std::size_t>(trial % 3), p = 1 + static_cast<std::size_t>(trial % 3);
    auto g = random_groups(gen, c, 4 + static_cast<std::size_t>(trial % 3), p, 0.5);
    const double got = statistic_LN(to_input(g)).statistic;
    const double want = oracle::rank_statistic(g);
    CHECK(got >= 0.0);
    CHECK(std::fabs(got - want) <= 1e-10 * std::max(1.0, std::fabs(want)));
  }
}

TEST_CASE("invariances") {
  std::mt19937_64 gen(3);
  for (int trial = 0; trial < 30; ++trial) {
    auto g = random_groups(gen, 3, 6, 2, 0.4);
    const double base = statistic_LN(to_input(g)).statistic;

    auto t = g;
    for (auto& grp : t) {
      for (auto& x : grp) {
        x[0] = std::exp(x[0]);
        x[1] = x[1] * x[1] * x[1] + 7.0;
      }
    }
    CHECK(statistic_LN(to_input(t)).statistic == base);

    auto swapped = g;
    std::swap(swapped[0], swapped[2]);
    CHECK(statistic_LN(to_input(swapped)).statistic == Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("degenerate covariance is reported") {
  RankTestInput in;
  Eigen::MatrixXd a(3, 2), b(3, 2);
  a << 1, 1, 2, 2, 3, 3;
  b << 4, 4, 5, 5, 6, 6;
  in.groups = {a, b};
  CHECK_THROWS_AS(statistic_LN(in), SingularCovariance);

  RankTestInput one;
  one.groups = {column({1.0})};
  CHECK_THROWS_AS(statistic_LN(one), InvalidArgument);
  RankTestInput empty;
  empty.groups = {column({1.0}), Eigen::MatrixXd(0, 1)};
  CHECK_THROWS_AS(statistic_LN(empty), InvalidArgument);
}

TEST_CASE("McKeon parameters") {
  const auto m = mckeon_params(2, 2, 40);
  CHECK(m.a == 2.0);
  CHECK(m.m_e == 38.0);
  CHECK(m.m_h == 1.0);
  // Re-derived by hand: B = 36*37/(33*36), b = 4 + 4/(B-1), scale = a(b-2)/(b*35).
  CHECK(m.B == Approx(37.0 / 33.0).epsilon(1e-14));
  CHECK(m.b == Approx(37.0).epsilon(1e-12));
  CHECK(m.scale_c == Approx(2.0 / 37.0).epsilon(1e-12));

  CHECK_THROWS_AS(mckeon_params(3, 3, 8), InapplicableApproximation);
  CHECK_THROWS_AS(mckeon_pvalue(-1.0, 2, 2, 40), InvalidArgument);

  double prev = 1.0;
  for (double l = 0.0; l < 30.0; l += 0.5) {
    const double p = mckeon_pvalue(l, 2, 3, 90).p_value;
    CHECK(p <= prev);
    CHECK(p >= 0.0);
    prev = p;
  }
  CHECK(prev < 1e-4);
}

TEST_CASE("permutation p-value") {
  std::mt19937_64 gen(4);
  const auto in = to_input(random_groups(gen, 2, 15, 2));
  const auto a = permutation_pvalue(in, 999, 7);
  const auto b = permutation_pvalue(in, 999, 7);
  CHECK(a.p_value == b.p_value);
  CHECK(a.method == RankMethod::permutation);
  CHECK(a.p_value > 0.0);
  CHECK(a.p_value <= 1.0);
  CHECK_THROWS_AS(permutation_pvalue(in, 50, 7), InvalidArgument);

  const auto shifted = to_input(random_groups(gen, 2, 15, 2, 3.0));
  CHECK(permutation_pvalue(shifted, 999, 1).p_value <= 0.01);

  // A balanced configuration must count every permutation as at least as extreme.
  RankTestInput bal;
  bal.groups = {column({1.0, 4.0}), column({2.0, 3.0})};
  CHECK(permutation_pvalue(bal, 99, 1).p_value == 1.0);
}

TEST_CASE("permutation and McKeon agree on moderate samples") {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 5; ++trial) {
    const auto in = to_input(random_groups(gen, 3, 30, 2, 0.2 * trial));
    const auto mk = rank_test(in, {RankMethodChoice::mckeon_f, 0, 0, kDefaultMaxCondition});
    const auto pm = rank_test(in, {RankMethodChoice::permutation, 9999, 11, kDefaultMaxCondition});
    INFO("mckeon " << mk.p_value << " permutation " << pm.p_value);
    CHECK(std::fabs(mk.p_value - pm.p_value) <= 0.03);
  }
}

TEST_CASE("automatic method falls back to permutation on small samples") {
  RankTestInput in;
  in.groups = {column({1.0, 5.0, 2.0}), column({3.0, 4.0, 6.0})};
  const auto r = rank_test(in, {RankMethodChoice::automatic, 199, 3, kDefaultMaxCondition});
  CHECK(r.method == RankMethod::permutation);
  CHECK_THROWS_AS(rank_test(in, {RankMethodChoice::mckeon_f, 199, 3, kDefaultMaxCondition}),
                  InapplicableApproximation);

  std::mt19937_64 gen(6);
  const auto big = to_input(random_groups(gen, 2, 25, 2));
  const auto rb = rank_test(big);
  CHECK(rb.method == RankMethod::mckeon_f);
  REQUIRE(rb.approx.has_value());
  const auto j = to_json(rb);
  CHECK(j.at("method") == "mckeon_f");
  CHECK(j.contains("approx_params"));
}

TEST_CASE("decision rule is strict") {
  RankTestResult r;
  r.p_value = 0.096;
  CHECK_FALSE(compatibility_decision(r).reject);
  CHECK(std::string(compatibility_decision(r).label()) == "Accepted");
  r.p_value = 0.000;
  CHECK(compatibility_decision(r).reject);
  CHECK(std::string(compatibility_decision(r).label()) == "Rejected");
  r.p_value = 0.005;
  CHECK_FALSE(compatibility_decision(r, 0.005).reject);
  r.p_value = 0.003;
  CHECK(compatibility_decision(r, 0.005).reject);
  CHECK_THROWS_AS(compatibility_decision(r, 1.5), InvalidArgument);
}
