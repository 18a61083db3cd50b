#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xcorr/catalog.hpp"
#include "xcorr/error.hpp"
#include "xcorr/paircounts.hpp"
#include "xcorr/randoms.hpp"
#include "xcorr/rng.hpp"

namespace xcorr {

/// Per-bin values; nullopt marks a bin whose denominator vanished.
using BinValues = std::vector<std::optional<double>>;

inline constexpr std::size_t kEstimatorCount = 4;

// Estimator ids 1..4:
//   1: DD/D2R1 - 1            2: DD/D1R2 - 1
//   3: DD*RR/(D1R2*D2R1) - 1  4: (DD - D1R2 - D2R1 + RR)/RR
using EstimatorSet = std::array<bool, kEstimatorCount>;

namespace detail {

inline void require_compatible(std::initializer_list<const PairCountHistogram*> hs) {
  const auto* first = *hs.begin();
  for (const auto* h : hs) {
    if (!h->normalized) throw InvalidArgument("estimators consume normalized histograms");
    if (!(h->bins == first->bins) || h->counts.size() != first->counts.size()) {
      throw InvalidArgument("estimator inputs use different bin grids");
    }
  }
}

}  // namespace detail

inline BinValues xi_natural_1(const PairCountHistogram& dd, const PairCountHistogram& d2r1) {
  detail::require_compatible({&dd, &d2r1});
  BinValues out(dd.counts.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (d2r1.counts[k] != 0.0) out[k] = dd.counts[k] / d2r1.counts[k] - 1.0;
  }
  return out;
}

inline BinValues xi_natural_2(const PairCountHistogram& dd, const PairCountHistogram& d1r2) {
  detail::require_compatible({&dd, &d1r2});
  BinValues out(dd.counts.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (d1r2.counts[k] != 0.0) out[k] = dd.counts[k] / d1r2.counts[k] - 1.0;
  }
  return out;
}

inline BinValues xi_improved_3(const PairCountHistogram& dd, const PairCountHistogram& d1r2,
                               const PairCountHistogram& d2r1, const PairCountHistogram& rr) {
  detail::require_compatible({&dd, &d1r2, &d2r1, &rr});
  BinValues out(dd.counts.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    const double den = d1r2.counts[k] * d2r1.counts[k];
    if (den != 0.0) out[k] = dd.counts[k] * rr.counts[k] / den - 1.0;
  }
  return out;
}

inline BinValues xi_improved_4(const PairCountHistogram& dd, const PairCountHistogram& d1r2,
                               const PairCountHistogram& d2r1, const PairCountHistogram& rr) {
  detail::require_compatible({&dd, &d1r2, &d2r1, &rr});
  BinValues out(dd.counts.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (rr.counts[k] != 0.0) {
      out[k] = (dd.counts[k] - d1r2.counts[k] - d2r1.counts[k] + rr.counts[k]) / rr.counts[k];
    }
  }
  return out;
}

/// Normalized D1D2, D1R2, D2R1 and R1R2 on one grid.
struct HistogramSet {
  PairCountHistogram dd, d1r2, d2r1, rr;
};

inline std::array<BinValues, kEstimatorCount> evaluate_estimators(const HistogramSet& h, const EstimatorSet& which) {
  std::array<BinValues, kEstimatorCount> out;
  const BinValues none(h.dd.counts.size());
  out[0] = which[0] ? xi_natural_1(h.dd, h.d2r1) : none;
  out[1] = which[1] ? xi_natural_2(h.dd, h.d1r2) : none;
  out[2] = which[2] ? xi_improved_3(h.dd, h.d1r2, h.d2r1, h.rr) : none;
  out[3] = which[3] ? xi_improved_4(h.dd, h.d1r2, h.d2r1, h.rr) : none;
  return out;
}

// ---------------------------------------------------------------------------
// Pipeline

struct XiConfig {
  AxisTransformSpec transform{};
  std::size_t n_bins = 10;
  EstimatorSet estimators{true, true, true, true};
  std::uint64_t seed = 0;
  double random_multiplier = 1.0;  // random catalog size relative to its data catalog
  std::size_t realizations = 1;    // random catalogs averaged per side
  ScaleSource scale_source = ScaleSource::all_pairs;
  double user_r_max = 1.0;         // only for ScaleSource::user
  std::size_t bootstrap_reps = 0;  // 0: no error bars
  PairCountOptions kernel{};
};

/// Everything held fixed across bootstrap replicates: transformed data,
/// random catalogs, the separation scale and the averaged R1R2 histogram.
struct PreparedAnalysis {
  Catalog a, b;
  PointSet d1, d2;
  std::vector<RandomSet> r1, r2;
  BinGrid bins;
  SeparationScale scale;
  PairCountHistogram rr;
};

namespace detail {

inline std::size_t random_size(std::size_t n_data, double multiplier) {
  const double n = std::round(multiplier * static_cast<double>(n_data));
  if (!(n >= 1.0)) throw InvalidArgument("random catalog size rounds to zero");
  return static_cast<std::size_t>(n);
}

// Seed tags keep the random-catalog and bootstrap streams disjoint.
inline constexpr std::uint64_t kRandomTag = 1;
inline constexpr std::uint64_t kBootstrapTag = 2;

inline PairCountHistogram counted(const PointSet& x, const PointSet& y, const PreparedAnalysis& p,
                                  const PairCountOptions& opt, PairKind kind) {
  auto h = normalize_counts(cross_pair_counts_accelerated(x, y, p.bins, p.scale, opt));
  h.kind = kind;
  return h;
}

inline PairCountHistogram averaged_dr(const PointSet& d, const std::vector<RandomSet>& rs, const PreparedAnalysis& p,
                                      const PairCountOptions& opt, PairKind kind) {
  std::vector<PairCountHistogram> hs;
  for (const auto& r : rs) hs.push_back(counted(d, r.points, p, opt, kind));
  return average_histograms(hs);
}

}  // namespace detail

inline PreparedAnalysis prepare_analysis(const Catalog& a, const Catalog& b, const XiConfig& cfg) {
  if (a.empty() || b.empty()) throw InvalidArgument("cross-correlation needs two non-empty catalogs");
  if (cfg.realizations == 0) throw InvalidArgument("need at least one random realization");
  PreparedAnalysis p{a, b, {}, {}, {}, {}, BinGrid(cfg.n_bins), {}, {}};

  const Catalog* both[] = {&a, &b};
  const auto pooled = scaled_range(both, cfg.transform);
  p.d1 = to_point_set(a, cfg.transform, pooled);
  p.d2 = to_point_set(b, cfg.transform, pooled);

  const std::size_t n1 = detail::random_size(a.size(), cfg.random_multiplier);
  const std::size_t n2 = detail::random_size(b.size(), cfg.random_multiplier);
  for (std::size_t j = 0; j < cfg.realizations; ++j) {
    p.r1.push_back(generate_randoms(p.d1, {n1, derive_seed(cfg.seed, detail::kRandomTag, 2 * j), std::nullopt}));
    p.r2.push_back(generate_randoms(p.d2, {n2, derive_seed(cfg.seed, detail::kRandomTag, 2 * j + 1), std::nullopt}));
  }

  switch (cfg.scale_source) {
    case ScaleSource::user:
      p.scale = SeparationScale(cfg.user_r_max, ScaleSource::user);
      break;
    case ScaleSource::data_data:
      p.scale = max_separation(p.d1, p.d2, ScaleSource::data_data);
      break;
    case ScaleSource::all_pairs: {
      double r = max_separation(p.d1, p.d2).r_max;
      for (std::size_t j = 0; j < cfg.realizations; ++j) {
        r = std::max({r, max_separation(p.d1, p.r2[j].points).r_max, max_separation(p.d2, p.r1[j].points).r_max,
                      max_separation(p.r1[j].points, p.r2[j].points).r_max});
      }
      p.scale = SeparationScale(r, ScaleSource::all_pairs);
      break;
    }
  }

  std::vector<PairCountHistogram> rr;
  for (std::size_t j = 0; j < cfg.realizations; ++j) {
    rr.push_back(detail::counted(p.r1[j].points, p.r2[j].points, p, cfg.kernel, PairKind::RR));
  }
  p.rr = average_histograms(rr);
  return p;
}

/// Pair counts of two (possibly resampled) data point sets against the fixed randoms.
inline HistogramSet count_pairs(const PointSet& d1, const PointSet& d2, const PreparedAnalysis& p,
                                const PairCountOptions& opt = {}) {
  return {detail::counted(d1, d2, p, opt, PairKind::DD), detail::averaged_dr(d1, p.r2, p, opt, PairKind::DR),
          detail::averaged_dr(d2, p.r1, p, opt, PairKind::RD), p.rr};
}

struct BootstrapErrors {
  std::array<BinValues, kEstimatorCount> sigma;
  std::array<std::vector<std::size_t>, kEstimatorCount> support;  // replicates defining each bin
  std::size_t n_reps = 0;
  std::uint64_t seed = 0;
};

/// Resamples the records of both catalogs with replacement (same sizes),
/// holding randoms, scale and transform fixed. Replicate r draws from stream
/// derive_seed(seed, tag, r): a's indices first, then b's.
inline BootstrapErrors bootstrap_errors(const PreparedAnalysis& p, const XiConfig& cfg, std::size_t n_reps,
                                        std::uint64_t seed) {
  if (n_reps < 2) throw InvalidArgument("bootstrap needs n_reps >= 2");
  const std::size_t n_bins = p.bins.size();
  std::array<std::vector<std::vector<double>>, kEstimatorCount> samples;
  for (auto& s : samples) s.assign(n_bins, {});

  std::vector<std::size_t> ia(p.d1.size()), ib(p.d2.size());
  for (std::size_t r = 0; r < n_reps; ++r) {
    SplitMix64 rng(derive_seed(seed, detail::kBootstrapTag, r));
    for (auto& i : ia) i = rng.below(ia.size());
    for (auto& i : ib) i = rng.below(ib.size());
    const auto xi = evaluate_estimators(count_pairs(p.d1.select(ia), p.d2.select(ib), p, cfg.kernel), cfg.estimators);
    for (std::size_t e = 0; e < kEstimatorCount; ++e) {
      for (std::size_t k = 0; k < n_bins; ++k) {
        if (xi[e][k]) samples[e][k].push_back(*xi[e][k]);
      }
    }
  }

  BootstrapErrors out;
  out.n_reps = n_reps;
  out.seed = seed;
  for (std::size_t e = 0; e < kEstimatorCount; ++e) {
    out.sigma[e].assign(n_bins, std::nullopt);
    out.support[e].assign(n_bins, 0);
    for (std::size_t k = 0; k < n_bins; ++k) {
      const auto& v = samples[e][k];
      out.support[e][k] = v.size();
      if (v.size() < 2) continue;
      double mean = 0.0;
      for (double x : v) mean += x;
      mean /= static_cast<double>(v.size());
      double ss = 0.0;
      for (double x : v) ss += (x - mean) * (x - mean);
      out.sigma[e][k] = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
  }
  return out;
}

inline BootstrapErrors bootstrap_errors(const Catalog& a, const Catalog& b, const XiConfig& cfg, std::size_t n_reps,
                                        std::uint64_t seed) {
  return bootstrap_errors(prepare_analysis(a, b, cfg), cfg, n_reps, seed);
}

struct XiMeta {
  std::string label_a, label_b;
  std::size_t n_a = 0, n_b = 0, n_r1 = 0, n_r2 = 0;
  std::uint64_t seed = 0;
  std::uint64_t bootstrap_seed = 0;
  std::size_t bootstrap_reps = 0;
  std::size_t realizations = 1;
  double random_multiplier = 1.0;
  double r_max = 0.0;
  ScaleSource scale_source = ScaleSource::all_pairs;
  std::string transform;
  std::string generator = SplitMix64::kAlgorithmId;
  EstimatorSet estimators{};
};

struct XiResult {
  BinGrid bins;
  std::vector<double> bin_centers;
  std::array<BinValues, kEstimatorCount> xi;
  std::array<BinValues, kEstimatorCount> sigma;
  std::array<std::vector<std::size_t>, kEstimatorCount> sigma_support;
  HistogramSet histograms;
  XiMeta meta;
};

/// Full cross-correlation of catalog a against catalog b.
inline XiResult estimate_xi(const Catalog& a, const Catalog& b, const XiConfig& cfg) {
  const auto p = prepare_analysis(a, b, cfg);
  XiResult res;
  res.bins = p.bins;
  for (std::size_t k = 0; k < p.bins.size(); ++k) res.bin_centers.push_back(p.bins.center(k));
  res.histograms = count_pairs(p.d1, p.d2, p, cfg.kernel);
  res.xi = evaluate_estimators(res.histograms, cfg.estimators);
  for (std::size_t e = 0; e < kEstimatorCount; ++e) {
    res.sigma[e].assign(p.bins.size(), std::nullopt);
    res.sigma_support[e].assign(p.bins.size(), 0);
  }
  auto& m = res.meta;
  m = {a.label(), b.label(), a.size(), b.size(), p.r1.front().points.size(), p.r2.front().points.size(),
       cfg.seed, derive_seed(cfg.seed, detail::kBootstrapTag), cfg.bootstrap_reps, cfg.realizations,
       cfg.random_multiplier, p.scale.r_max, p.scale.source, cfg.transform.canonical(),
       SplitMix64::kAlgorithmId, cfg.estimators};
  if (cfg.bootstrap_reps > 0) {
    auto boot = bootstrap_errors(p, cfg, cfg.bootstrap_reps, m.bootstrap_seed);
    res.sigma = std::move(boot.sigma);
    res.sigma_support = std::move(boot.support);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Export

/// bin_lo,bin_hi,r_center,xi_1..4,sigma_1..4,defined_1..4. Undefined values are empty.
inline void write_xi_csv(std::ostream& out, const XiResult& r) {
  auto num = [](const std::optional<double>& v) { return v ? detail::format_double(*v) : std::string(); };
  out << "bin_lo,bin_hi,r_center,xi_1,xi_2,xi_3,xi_4,sigma_1,sigma_2,sigma_3,sigma_4,"
         "defined_1,defined_2,defined_3,defined_4\n";
  for (std::size_t k = 0; k < r.bins.size(); ++k) {
    out << detail::format_double(r.bins.lo(k)) << ',' << detail::format_double(r.bins.hi(k)) << ','
        << detail::format_double(r.bin_centers[k]);
    for (const auto& xi : r.xi) out << ',' << num(xi[k]);
    for (const auto& s : r.sigma) out << ',' << num(s[k]);
    for (const auto& xi : r.xi) out << ',' << (xi[k] ? 1 : 0);
    out << '\n';
  }
}

inline nlohmann::json xi_metadata(const XiResult& r) {
  const auto& m = r.meta;
  nlohmann::json est = nlohmann::json::array();
  for (std::size_t e = 0; e < kEstimatorCount; ++e) {
    if (m.estimators[e]) est.push_back(e + 1);
  }
  nlohmann::json undefined = nlohmann::json::object();
  for (std::size_t e = 0; e < kEstimatorCount; ++e) {
    if (!m.estimators[e]) continue;
    nlohmann::json bins = nlohmann::json::array();
    for (std::size_t k = 0; k < r.bins.size(); ++k) {
      if (!r.xi[e][k]) bins.push_back(k);
    }
    undefined["xi_" + std::to_string(e + 1)] = bins;
  }
  nlohmann::json empty = nlohmann::json::array();
  for (std::size_t k = 0; k < r.histograms.dd.counts.size(); ++k) {
    if (r.histograms.dd.counts[k] == 0.0) empty.push_back(k);
  }
  return {
      {"schema_version", 1},
      {"catalog_a", m.label_a},
      {"catalog_b", m.label_b},
      {"n_a", m.n_a},
      {"n_b", m.n_b},
      {"n_random_1", m.n_r1},
      {"n_random_2", m.n_r2},
      {"estimators", est},
      {"undefined_bins", undefined},
      {"empty_data_bins", empty},
      {"n_bins", r.bins.size()},
      {"r_max", m.r_max},
      {"scale_source", to_string(m.scale_source)},
      {"transform", m.transform},
      {"seed", m.seed},
      {"random_generator", m.generator},
      {"random_multiplier", m.random_multiplier},
      {"realizations", m.realizations},
      {"bootstrap_reps", m.bootstrap_reps},
      {"bootstrap_seed", m.bootstrap_seed},
  };
}

}  // namespace xcorr
