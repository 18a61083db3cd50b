#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

#include <nlohmann/json.hpp>

#include "xcorr/error.hpp"

namespace xcorr {

/// xi(r) = A / r with the exponent held at -1.
struct PowerLawFit {
  double amplitude = 0.0;
  std::size_t n_points_used = 0;
  double residual_sum_squares = 0.0;
  bool weighted = false;

  double operator()(double r) const noexcept { return amplitude / r; }
};

namespace detail {

inline void check_fit_input(std::span<const double> r, std::span<const double> xi) {
  if (r.size() != xi.size()) throw InvalidArgument("power-law fit: r and xi differ in length");
  if (r.empty()) throw InvalidArgument("power-law fit: no defined points");
  for (std::size_t k = 0; k < r.size(); ++k) {
    if (!(r[k] > 0.0)) throw InvalidArgument("power-law fit: r must be > 0");
    if (!std::isfinite(xi[k])) throw InvalidArgument("power-law fit: non-finite xi");
  }
}

}  // namespace detail

/// Least squares in xi: A = sum(xi/r) / sum(1/r^2).
inline PowerLawFit fit_inverse_power_law(std::span<const double> r, std::span<const double> xi) {
  detail::check_fit_input(r, xi);
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) {
    num += xi[k] / r[k];
    den += 1.0 / (r[k] * r[k]);
  }
  PowerLawFit fit{num / den, r.size(), 0.0, false};
  for (std::size_t k = 0; k < r.size(); ++k) {
    const double e = xi[k] - fit(r[k]);
    fit.residual_sum_squares += e * e;
  }
  return fit;
}

/// Weighted variant with weights 1/sigma^2; RSS is the weighted chi-square.
inline PowerLawFit fit_inverse_power_law_weighted(std::span<const double> r, std::span<const double> xi,
                                                  std::span<const double> sigma) {
  detail::check_fit_input(r, xi);
  if (sigma.size() != r.size()) throw InvalidArgument("power-law fit: sigma length mismatch");
  double num = 0.0, den = 0.0;
  for (std::size_t k = 0; k < r.size(); ++k) {
    if (!(sigma[k] > 0.0)) throw InvalidArgument("power-law fit: sigma must be > 0");
    const double w = 1.0 / (sigma[k] * sigma[k]);
    num += w * xi[k] / r[k];
    den += w / (r[k] * r[k]);
  }
  PowerLawFit fit{num / den, r.size(), 0.0, true};
  for (std::size_t k = 0; k < r.size(); ++k) {
    const double e = (xi[k] - fit(r[k])) / sigma[k];
    fit.residual_sum_squares += e * e;
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov

/// P(K > lambda) for the limiting Kolmogorov distribution. Both classical
/// series are summed until a term drops below 1e-10; the theta-transformed
/// one converges fast for small lambda, the alternating one for large.
inline double kolmogorov_survival(double lambda) {
  if (!(lambda > 0.0)) return 1.0;
  constexpr double kTol = 1e-10;
  if (lambda < 1.0) {
    const double pi2 = std::numbers::pi * std::numbers::pi;
    double s = 0.0;
    for (int k = 1;; ++k) {
      const double m = 2.0 * k - 1.0;
      const double term = std::exp(-m * m * pi2 / (8.0 * lambda * lambda));
      s += term;
      if (term < kTol) break;
    }
    return std::clamp(1.0 - std::sqrt(2.0 * std::numbers::pi) / lambda * s, 0.0, 1.0);
  }
  double s = 0.0;
  for (int k = 1;; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    s += (k % 2 ? term : -term);
    if (term < kTol) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

struct KsReport {
  double d_statistic = 0.0;
  double p_value = 1.0;
  std::size_t n1 = 0, n2 = 0;
};

/// D = sup |F_x - F_y| with right-continuous empirical CDFs; asymptotic p with
/// effective size n1*n2/(n1+n2).
inline KsReport ks_two_sample(std::span<const double> x, std::span<const double> y) {
  if (x.empty() || y.empty()) throw InvalidArgument("KS test needs two non-empty samples");
  std::vector<double> a(x.begin(), x.end()), b(y.begin(), y.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  // Step through pooled values; ties advance both CDFs before comparing.
  while (i < a.size() && j < b.size()) {
    const double t = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == t) ++i;
    while (j < b.size() && b[j] == t) ++j;
    d = std::max(d, std::fabs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  KsReport rep{d, 1.0, a.size(), b.size()};
  const double ne = na * nb / (na + nb);
  rep.p_value = kolmogorov_survival(std::sqrt(ne) * d);
  return rep;
}

/// One-sample KS of x against a continuous CDF.
inline KsReport ks_one_sample(std::span<const double> x, const std::function<double(double)>& cdf) {
  if (x.empty()) throw InvalidArgument("KS test needs a non-empty sample");
  std::vector<double> a(x.begin(), x.end());
  std::sort(a.begin(), a.end());
  const double n = static_cast<double>(a.size());
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double f = cdf(a[i]);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return {d, kolmogorov_survival(std::sqrt(n) * d), a.size(), 0};
}

struct GoodnessOfFit {
  KsReport ks;
  double alpha = 0.05;
  bool accepted = true;  // p >= alpha
};

/// Two-sample KS between the estimated xi values and the fitted A/r values.
inline GoodnessOfFit goodness_of_fit(std::span<const double> xi, const PowerLawFit& fit, std::span<const double> r,
                                     double alpha = 0.05) {
  if (xi.size() != r.size()) throw InvalidArgument("goodness of fit: xi and r differ in length");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidArgument("alpha must lie in (0,1)");
  std::vector<double> fitted(r.size());
  for (std::size_t k = 0; k < r.size(); ++k) fitted[k] = fit(r[k]);
  GoodnessOfFit g{ks_two_sample(xi, fitted), alpha, true};
  g.accepted = !(g.ks.p_value < alpha);
  return g;
}

inline nlohmann::json to_json(const PowerLawFit& f) {
  return {{"amplitude", f.amplitude},
          {"exponent", -1},
          {"n_points_used", f.n_points_used},
          {"residual_sum_squares", f.residual_sum_squares},
          {"weighted", f.weighted}};
}

inline nlohmann::json to_json(const GoodnessOfFit& g) {
  return {{"test", "ks_two_sample"},
          {"d_statistic", g.ks.d_statistic},
          {"p_value", g.ks.p_value},
          {"n1", g.ks.n1},
          {"n2", g.ks.n2},
          {"alpha", g.alpha},
          {"decision", g.accepted ? "accept" : "reject"}};
}

}  // namespace xcorr
