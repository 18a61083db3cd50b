#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/fisher_f.hpp>
#include <nlohmann/json.hpp>

#include "xcorr/error.hpp"
#include "xcorr/rng.hpp"

namespace xcorr {

// Puri-Sen multivariate multisample rank test.
//
// Observations of all c groups are pooled (N total) and ranked per variable;
// scores are rank/(N+1). With T_k the mean score vector of group k, E the
// pooled mean score vector and V the pooled score covariance,
//
//   L = sum_k n_k (T_k - E) V^{-1} (T_k - E)'
//
// Under H0 L is referred either to McKeon's scaled F approximation or to the
// permutation distribution obtained by relabelling pooled observations.

class SingularCovariance : public Error {
 public:
  using Error::Error;
};

class InapplicableApproximation : public Error {
 public:
  using Error::Error;
};

/// Group k is an n_k x p matrix, one observation per row.
struct RankTestInput {
  std::vector<Eigen::MatrixXd> groups;

  std::size_t variables() const { return groups.empty() ? 0 : static_cast<std::size_t>(groups.front().cols()); }
  std::size_t total() const {
    std::size_t n = 0;
    for (const auto& g : groups) n += static_cast<std::size_t>(g.rows());
    return n;
  }

  void validate() const {
    if (groups.size() < 2) throw InvalidArgument("rank test needs at least two groups");
    const auto p = groups.front().cols();
    if (p < 1) throw InvalidArgument("rank test needs at least one variable");
    for (const auto& g : groups) {
      if (g.rows() == 0) throw InvalidArgument("rank test: empty group");
      if (g.cols() != p) throw InvalidArgument("rank test: groups differ in variable count");
      if (!g.allFinite()) throw InvalidArgument("rank test: non-finite observation");
    }
  }
};

struct RankMatrix {
  Eigen::MatrixXd ranks;               // p x N, columns in pooled group order
  std::vector<std::size_t> tie_groups;  // per variable: sets of equal values sharing a mid-rank
  std::vector<std::size_t> group_of;    // pooled column -> group index
  std::vector<std::size_t> group_sizes;

  std::size_t total_tie_groups() const { return std::accumulate(tie_groups.begin(), tie_groups.end(), std::size_t{0}); }
};

/// Mid-ranks 1..N per variable over the pooled observations.
inline RankMatrix componentwise_ranks(const RankTestInput& in) {
  in.validate();
  const auto p = static_cast<Eigen::Index>(in.variables());
  const auto n = static_cast<Eigen::Index>(in.total());
  Eigen::MatrixXd pooled(p, n);
  RankMatrix out;
  out.ranks.resize(p, n);
  Eigen::Index col = 0;
  for (std::size_t k = 0; k < in.groups.size(); ++k) {
    const auto& g = in.groups[k];
    out.group_sizes.push_back(static_cast<std::size_t>(g.rows()));
    for (Eigen::Index r = 0; r < g.rows(); ++r, ++col) {
      pooled.col(col) = g.row(r).transpose();
      out.group_of.push_back(k);
    }
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < p; ++i) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return pooled(i, x) < pooled(i, y); });
    std::size_t ties = 0;
    for (Eigen::Index s = 0; s < n;) {
      Eigen::Index e = s + 1;
      while (e < n && pooled(i, order[e]) == pooled(i, order[s])) ++e;
      const double mid = 0.5 * static_cast<double>(s + 1 + e);  // mean of ranks s+1..e
      for (Eigen::Index t = s; t < e; ++t) out.ranks(i, order[t]) = mid;
      if (e - s > 1) ++ties;
      s = e;
    }
    out.tie_groups.push_back(ties);
  }
  return out;
}

/// Scores rank/(N+1), elementwise.
inline Eigen::MatrixXd rank_scores(const RankMatrix& r) {
  return r.ranks / (static_cast<double>(r.ranks.cols()) + 1.0);
}

struct McKeonParams {
  double m_h = 0, m_e = 0, B = 0, a = 0, b = 0, scale_c = 0;
};

enum class RankMethod { mckeon_f, permutation };

inline const char* to_string(RankMethod m) noexcept {
  return m == RankMethod::mckeon_f ? "mckeon_f" : "permutation";
}

struct RankTestResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::optional<McKeonParams> approx;
  RankMethod method = RankMethod::mckeon_f;
  std::size_t n_perms = 0;
  std::size_t p = 0, c_groups = 0, n_total = 0;
  std::size_t tie_groups = 0;
  std::vector<std::string> warnings;
  Eigen::MatrixXd group_means;  // c x p, T_k
  Eigen::VectorXd mean_scores;  // E
  Eigen::MatrixXd covariance;   // V
};

namespace detail {

inline std::vector<std::string> tie_warnings(std::size_t tie_groups) {
  if (tie_groups == 0) return {};
  return {std::to_string(tie_groups) + " tied value group(s) given mid-ranks"};
}

/// Fixed pooled quantities plus a factorization of V; evaluates L for any
/// assignment of the pooled columns to groups of the original sizes.
///
/// L is unchanged when every score is multiplied by the same constant, so it
/// is evaluated on the ranks themselves. Mid-ranks are half-integers, which
/// keeps each group's deviation N*sum_k - n_k*sum exact: L is exactly 0 when
/// every group's mean rank equals the pooled mean.
class RankStatistic {
 public:
  RankStatistic(const Eigen::MatrixXd& ranks, std::vector<std::size_t> sizes, double max_condition)
      : ranks_(ranks), sizes_(std::move(sizes)), n_(static_cast<double>(ranks.cols())) {
    totals_ = ranks_.rowwise().sum();
    const Eigen::VectorXd m = totals_ / n_;
    const Eigen::MatrixXd rank_cov = ranks_ * ranks_.transpose() / n_ - m * m.transpose();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(rank_cov);
    const auto& ev = eig.eigenvalues();
    const double lo = ev.minCoeff(), hi = ev.maxCoeff();
    if (!(lo > 0.0) || hi / lo > max_condition) {
      Eigen::Index which = 0;
      ev.minCoeff(&which);
      const Eigen::VectorXd null_dir = eig.eigenvectors().col(which);
      std::string vars;
      for (Eigen::Index i = 0; i < null_dir.size(); ++i) {
        if (std::fabs(null_dir(i)) > 0.1) vars += (vars.empty() ? "" : ", ") + std::to_string(i);
      }
      throw SingularCovariance("rank-score covariance is singular or ill-conditioned (condition " +
                               (lo > 0.0 ? std::to_string(hi / lo) : std::string("inf")) +
                               "); degenerate variables: " + vars);
    }
    llt_.compute(rank_cov);
    const double scale = n_ + 1.0;
    mean_ = m / scale;
    cov_ = rank_cov / (scale * scale);
  }

  double operator()(std::span<const std::size_t> group_of, Eigen::MatrixXd* means = nullptr) const {
    const auto p = ranks_.rows();
    const auto c = static_cast<Eigen::Index>(sizes_.size());
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(p, c);
    for (Eigen::Index a = 0; a < ranks_.cols(); ++a) sums.col(static_cast<Eigen::Index>(group_of[a])) += ranks_.col(a);
    double stat = 0.0;
    for (Eigen::Index k = 0; k < c; ++k) {
      const double nk = static_cast<double>(sizes_[k]);
      // n_k * N * (group mean - pooled mean)
      const Eigen::VectorXd d = n_ * sums.col(k) - nk * totals_;
      stat += d.dot(llt_.solve(d)) / (nk * n_ * n_);
    }
    if (means) {
      means->resize(c, p);
      for (Eigen::Index k = 0; k < c; ++k) {
        means->row(k) = sums.col(k).transpose() / (static_cast<double>(sizes_[k]) * (n_ + 1.0));
      }
    }
    return std::max(stat, 0.0);
  }

  /// Pooled mean score vector and score covariance V.
  const Eigen::VectorXd& mean() const { return mean_; }
  const Eigen::MatrixXd& covariance() const { return cov_; }

 private:
  Eigen::MatrixXd ranks_;
  std::vector<std::size_t> sizes_;
  double n_;
  Eigen::VectorXd totals_;
  Eigen::VectorXd mean_;
  Eigen::MatrixXd cov_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
};

}  // namespace detail

inline constexpr double kDefaultMaxCondition = 1e12;

/// L and its intermediates; p_value is left at 1 and method unset.
inline RankTestResult statistic_LN(const RankTestInput& in, double max_condition = kDefaultMaxCondition) {
  const auto ranks = componentwise_ranks(in);
  const detail::RankStatistic stat(ranks.ranks, ranks.group_sizes, max_condition);
  RankTestResult r;
  r.statistic = stat(ranks.group_of, &r.group_means);
  r.p = in.variables();
  r.c_groups = in.groups.size();
  r.n_total = in.total();
  r.tie_groups = ranks.total_tie_groups();
  r.warnings = detail::tie_warnings(r.tie_groups);
  r.mean_scores = stat.mean();
  r.covariance = stat.covariance();
  return r;
}

/// Degrees of freedom and scale of McKeon's F approximation, L ~ m_E * scale_c * F(a, b).
inline McKeonParams mckeon_params(std::size_t p, std::size_t c_groups, std::size_t n_total) {
  McKeonParams m;
  const double pp = static_cast<double>(p);
  m.m_h = static_cast<double>(c_groups) - 1.0;
  m.m_e = static_cast<double>(n_total) - static_cast<double>(c_groups);
  if (!(m.m_e - pp - 3.0 > 0.0) || !(m.m_h > 0.0)) {
    throw InapplicableApproximation("McKeon F approximation needs N - c - p - 3 > 0; use the permutation method");
  }
  m.a = pp * m.m_h;
  m.B = (m.m_e + m.m_h - pp - 1.0) * (m.m_e - 1.0) / ((m.m_e - pp - 3.0) * (m.m_e - pp));
  if (!(m.B > 1.0)) throw InapplicableApproximation("McKeon F approximation needs B > 1; use the permutation method");
  m.b = 4.0 + (m.a + 2.0) / (m.B - 1.0);
  m.scale_c = m.a * (m.b - 2.0) / (m.b * (m.m_e - pp - 1.0));
  if (!(m.a > 0.0 && m.b > 0.0 && m.scale_c > 0.0)) {
    throw InapplicableApproximation("McKeon F approximation has non-positive parameters; use the permutation method");
  }
  return m;
}

struct McKeonPValue {
  double p_value = 1.0;
  McKeonParams params;
};

inline McKeonPValue mckeon_pvalue(double statistic, std::size_t p, std::size_t c_groups, std::size_t n_total) {
  if (statistic < 0.0) throw InvalidArgument("rank statistic must be >= 0");
  McKeonPValue out{1.0, mckeon_params(p, c_groups, n_total)};
  const double f = statistic / (out.params.m_e * out.params.scale_c);
  const boost::math::fisher_f dist(out.params.a, out.params.b);
  out.p_value = std::clamp(boost::math::cdf(boost::math::complement(dist, f)), 0.0, 1.0);
  return out;
}

/// Monte Carlo permutation p = (1 + #{L_perm >= L_obs}) / (1 + n_perms).
/// Permutation r shuffles the pooled group labels with stream derive_seed(seed, r).
inline RankTestResult permutation_pvalue(const RankTestInput& in, std::size_t n_perms, std::uint64_t seed,
                                         double max_condition = kDefaultMaxCondition) {
  if (n_perms < 99) throw InvalidArgument("permutation test needs n_perms >= 99");
  const auto ranks = componentwise_ranks(in);
  const detail::RankStatistic stat(ranks.ranks, ranks.group_sizes, max_condition);
  RankTestResult r;
  r.statistic = stat(ranks.group_of, &r.group_means);
  // Relabellings that reproduce the observed partition must count as ">=".
  const double threshold = r.statistic * (1.0 - 1e-12);
  std::size_t hits = 0;
  std::vector<std::size_t> labels(ranks.group_of.size());
  for (std::size_t perm = 0; perm < n_perms; ++perm) {
    labels = ranks.group_of;
    SplitMix64 rng(derive_seed(seed, perm));
    for (std::size_t i = labels.size(); i > 1; --i) std::swap(labels[i - 1], labels[rng.below(i)]);
    if (stat(labels) >= threshold) ++hits;
  }
  r.p_value = static_cast<double>(1 + hits) / static_cast<double>(1 + n_perms);
  r.method = RankMethod::permutation;
  r.n_perms = n_perms;
  r.p = in.variables();
  r.c_groups = in.groups.size();
  r.n_total = in.total();
  r.tie_groups = ranks.total_tie_groups();
  r.warnings = detail::tie_warnings(r.tie_groups);
  r.mean_scores = stat.mean();
  r.covariance = stat.covariance();
  return r;
}

struct Decision {
  bool reject = false;
  double alpha = 0.005;
  double p_value = 1.0;

  const char* label() const noexcept { return reject ? "Rejected" : "Accepted"; }
};

/// Reject iff p < alpha.
inline Decision compatibility_decision(const RankTestResult& r, double alpha = 0.005) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0,1)");
  return {r.p_value < alpha, alpha, r.p_value};
}

enum class RankMethodChoice { automatic, mckeon_f, permutation };

struct RankTestOptions {
  RankMethodChoice method = RankMethodChoice::automatic;
  std::size_t n_perms = 9999;
  std::uint64_t seed = 0;
  double max_condition = kDefaultMaxCondition;
};

/// McKeon F when requested or applicable, otherwise permutation.
inline RankTestResult rank_test(const RankTestInput& in, const RankTestOptions& opt = {}) {
  if (opt.method == RankMethodChoice::permutation) {
    return permutation_pvalue(in, opt.n_perms, opt.seed, opt.max_condition);
  }
  auto r = statistic_LN(in, opt.max_condition);
  try {
    const auto mk = mckeon_pvalue(r.statistic, r.p, r.c_groups, r.n_total);
    r.p_value = mk.p_value;
    r.approx = mk.params;
    r.method = RankMethod::mckeon_f;
    return r;
  } catch (const InapplicableApproximation&) {
    if (opt.method == RankMethodChoice::mckeon_f) throw;
  }
  return permutation_pvalue(in, opt.n_perms, opt.seed, opt.max_condition);
}

inline nlohmann::json to_json(const RankTestResult& r) {
  nlohmann::json j = {{"statistic", r.statistic},
                      {"p_value", r.p_value},
                      {"method", to_string(r.method)},
                      {"p", r.p},
                      {"c_groups", r.c_groups},
                      {"n_total", r.n_total},
                      {"tie_groups", r.tie_groups}};
  if (r.approx) {
    j["approx_params"] = {{"m_h", r.approx->m_h}, {"m_e", r.approx->m_e}, {"B", r.approx->B},
                          {"a", r.approx->a},     {"b", r.approx->b},     {"scale_c", r.approx->scale_c}};
  }
  if (r.method == RankMethod::permutation) j["n_perms"] = r.n_perms;
  j["warnings"] = r.warnings;
  return j;
}

}  // namespace xcorr
