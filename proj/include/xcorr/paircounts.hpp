#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <mutex>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "xcorr/error.hpp"
#include "xcorr/points.hpp"

namespace xcorr {

/// Uniform bins over normalized separation [0,1]. The last bin is closed on
/// the right so a pair at exactly the maximum separation is kept.
class BinGrid {
 public:
  BinGrid() : BinGrid(10) {}
  explicit BinGrid(std::size_t n_bins) : edges_(n_bins + 1) {
    if (n_bins == 0) throw InvalidArgument("bin grid needs at least one bin");
    for (std::size_t k = 0; k <= n_bins; ++k) {
      edges_[k] = static_cast<double>(k) / static_cast<double>(n_bins);
    }
  }

  std::size_t size() const noexcept { return edges_.size() - 1; }
  std::span<const double> edges() const noexcept { return edges_; }
  double lo(std::size_t k) const noexcept { return edges_[k]; }
  double hi(std::size_t k) const noexcept { return edges_[k + 1]; }
  double center(std::size_t k) const noexcept { return 0.5 * (edges_[k] + edges_[k + 1]); }

  /// Bin k with edges[k] <= u < edges[k+1] (last bin: u <= 1). Requires 0 <= u <= 1.
  /// Monotone non-decreasing in u.
  std::size_t index(double u) const noexcept {
    const std::size_t n = size();
    auto k = static_cast<std::size_t>(u * static_cast<double>(n));
    if (k >= n) k = n - 1;
    while (k > 0 && u < edges_[k]) --k;
    while (k + 1 < n && u >= edges_[k + 1]) ++k;
    return k;
  }

  friend bool operator==(const BinGrid&, const BinGrid&) = default;

 private:
  std::vector<double> edges_;
};

enum class ScaleSource { data_data, all_pairs, user };

inline const char* to_string(ScaleSource s) noexcept {
  switch (s) {
    case ScaleSource::data_data: return "data-data";
    case ScaleSource::all_pairs: return "all-pairs";
    case ScaleSource::user: return "user";
  }
  return "?";
}

struct SeparationScale {
  double r_max = 1.0;
  ScaleSource source = ScaleSource::user;

  SeparationScale() = default;
  SeparationScale(double r, ScaleSource s) : r_max(r), source(s) {
    if (!(r_max > 0.0) || !std::isfinite(r_max)) {
      throw InvalidArgument("separation scale must be positive and finite");
    }
  }
};

enum class PairKind { DD, DR, RD, RR };

inline const char* to_string(PairKind k) noexcept {
  switch (k) {
    case PairKind::DD: return "DD";
    case PairKind::DR: return "DR";
    case PairKind::RD: return "RD";
    case PairKind::RR: return "RR";
  }
  return "?";
}

struct PairCountHistogram {
  BinGrid bins;
  std::vector<double> counts;     // raw integers, or fractions of total_pairs once normalized
  std::uint64_t total_pairs = 0;  // admissible pairs: n_a*n_b, or n(n-1)/2 for a set with itself
  bool normalized = false;
  PairKind kind = PairKind::DD;
  std::string label_a, label_b;

  double sum() const noexcept { return std::accumulate(counts.begin(), counts.end(), 0.0); }
};

struct PairCountOptions {
  unsigned threads = 0;         // 0: hardware concurrency
  std::size_t leaf_size = 8;    // points per tree leaf
};

// ---------------------------------------------------------------------------
// Bounding-box tree. Nodes hold tight boxes of the points they own; leaves are
// contiguous ranges of a reordered copy of the input.

namespace detail {

template <std::size_t Dim>
struct Node {
  Point<Dim> lo, hi;
  std::uint32_t begin = 0, end = 0;
  std::int32_t left = -1, right = -1;

  bool leaf() const noexcept { return left < 0; }
  std::uint64_t count() const noexcept { return end - begin; }
};

template <std::size_t Dim>
class BoxTree {
 public:
  BoxTree(std::span<const Point<Dim>> pts, std::size_t leaf_size) : pts_(pts.begin(), pts.end()) {
    if (pts_.empty()) return;
    nodes_.reserve(2 * (pts_.size() / std::max<std::size_t>(leaf_size, 1) + 1));
    build(0, static_cast<std::uint32_t>(pts_.size()), std::max<std::size_t>(leaf_size, 1));
  }

  const std::vector<Node<Dim>>& nodes() const noexcept { return nodes_; }
  const Node<Dim>& node(std::int32_t i) const noexcept { return nodes_[i]; }
  const std::vector<Point<Dim>>& points() const noexcept { return pts_; }

  /// Nodes covering all points, each holding at most about total/target points.
  std::vector<std::int32_t> frontier(std::size_t target) const {
    std::vector<std::int32_t> out{0}, next;
    while (out.size() < target) {
      next.clear();
      bool split = false;
      for (auto i : out) {
        if (nodes_[i].leaf()) {
          next.push_back(i);
        } else {
          next.push_back(nodes_[i].left);
          next.push_back(nodes_[i].right);
          split = true;
        }
      }
      out.swap(next);
      if (!split) break;
    }
    return out;
  }

 private:
  std::int32_t build(std::uint32_t begin, std::uint32_t end, std::size_t leaf_size) {
    const auto id = static_cast<std::int32_t>(nodes_.size());
    nodes_.emplace_back();
    Node<Dim> n;
    n.begin = begin;
    n.end = end;
    n.lo = n.hi = pts_[begin];
    for (auto i = begin; i < end; ++i) {
      for (std::size_t d = 0; d < Dim; ++d) {
        n.lo[d] = std::min(n.lo[d], pts_[i][d]);
        n.hi[d] = std::max(n.hi[d], pts_[i][d]);
      }
    }
    if (end - begin > leaf_size) {
      std::size_t axis = 0;
      for (std::size_t d = 1; d < Dim; ++d) {
        if (n.hi[d] - n.lo[d] > n.hi[axis] - n.lo[axis]) axis = d;
      }
      if (n.hi[axis] > n.lo[axis]) {
        const auto mid = begin + (end - begin) / 2;
        std::nth_element(pts_.begin() + begin, pts_.begin() + mid, pts_.begin() + end,
                         [axis](const Point<Dim>& a, const Point<Dim>& b) { return a[axis] < b[axis]; });
        n.left = build(begin, mid, leaf_size);
        n.right = build(mid, end, leaf_size);
      }
    }
    nodes_[id] = n;
    return id;
  }

  std::vector<Point<Dim>> pts_;
  std::vector<Node<Dim>> nodes_;
};

/// Bounds on the *computed* separation of any pair drawn from two boxes.
/// Subtraction, squaring, summation and sqrt are each monotone under
/// round-to-nearest, so evaluating `separation`'s expression at the extreme
/// coordinate differences brackets every value it can return.
template <std::size_t Dim>
inline std::pair<double, double> separation_bounds(const Point<Dim>& alo, const Point<Dim>& ahi,
                                                   const Point<Dim>& blo, const Point<Dim>& bhi) noexcept {
  double smin = 0.0, smax = 0.0;
  for (std::size_t d = 0; d < Dim; ++d) {
    const double tlo = alo[d] - bhi[d];
    const double thi = ahi[d] - blo[d];
    const double alo_abs = std::fabs(tlo), ahi_abs = std::fabs(thi);
    const double mx = std::max(alo_abs, ahi_abs);
    const double mn = (tlo <= 0.0 && thi >= 0.0) ? 0.0 : std::min(alo_abs, ahi_abs);
    smin += mn * mn;
    smax += mx * mx;
  }
  return {std::sqrt(smin), std::sqrt(smax)};
}

[[noreturn]] inline void throw_out_of_scale() {
  throw InvalidArgument("pair separation exceeds the normalization scale r_max");
}

template <std::size_t Dim>
class DualTreeCounter {
 public:
  DualTreeCounter(const BoxTree<Dim>& a, const BoxTree<Dim>& b, const BinGrid& bins, double r_max,
                  std::vector<std::uint64_t>& hist)
      : a_(a), b_(b), bins_(bins), r_max_(r_max), hist_(hist) {}

  void cross(std::int32_t ia, std::int32_t ib) {
    const auto& na = a_.node(ia);
    const auto& nb = b_.node(ib);
    const auto [dlo, dhi] = separation_bounds<Dim>(na.lo, na.hi, nb.lo, nb.hi);
    const double ulo = dlo / r_max_, uhi = dhi / r_max_;
    if (ulo > 1.0) throw_out_of_scale();
    if (uhi <= 1.0) {
      const auto k = bins_.index(ulo);
      if (k == bins_.index(uhi)) {
        hist_[k] += na.count() * nb.count();
        return;
      }
    }
    if (na.leaf() && nb.leaf()) {
      brute_cross(na, nb);
    } else if (nb.leaf() || (!na.leaf() && na.count() >= nb.count())) {
      cross(na.left, ib);
      cross(na.right, ib);
    } else {
      cross(ia, nb.left);
      cross(ia, nb.right);
    }
  }

  // Unordered pairs i<j within one node of a tree counted against itself.
  void self(std::int32_t ia) {
    const auto& n = a_.node(ia);
    if (n.leaf()) {
      const auto& p = a_.points();
      for (auto i = n.begin; i < n.end; ++i) {
        for (auto j = i + 1; j < n.end; ++j) add(separation<Dim>(p[i], p[j]));
      }
      return;
    }
    self(n.left);
    self(n.right);
    cross(n.left, n.right);
  }

 private:
  void add(double d) {
    const double u = d / r_max_;
    if (u > 1.0) throw_out_of_scale();
    ++hist_[bins_.index(u)];
  }

  void brute_cross(const Node<Dim>& na, const Node<Dim>& nb) {
    const auto& pa = a_.points();
    const auto& pb = b_.points();
    for (auto i = na.begin; i < na.end; ++i) {
      for (auto j = nb.begin; j < nb.end; ++j) add(separation<Dim>(pa[i], pb[j]));
    }
  }

  const BoxTree<Dim>& a_;
  const BoxTree<Dim>& b_;
  const BinGrid& bins_;
  double r_max_;
  std::vector<std::uint64_t>& hist_;
};

inline unsigned resolve_threads(unsigned requested) {
  if (requested != 0) return requested;
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs `job(task, local_hist)` for every task index on `threads` workers.
/// Integer histograms are summed afterwards, so the result does not depend on
/// which worker ran which task.
template <class Job>
std::vector<std::uint64_t> run_tasks(std::size_t n_tasks, std::size_t n_bins, unsigned threads, Job&& job) {
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(n_tasks, 1)));
  std::vector<std::vector<std::uint64_t>> local(threads, std::vector<std::uint64_t>(n_bins, 0));
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&](unsigned w) {
    try {
      for (std::size_t t; (t = next.fetch_add(1)) < n_tasks;) job(t, local[w]);
    } catch (...) {
      std::lock_guard lock(failure_mutex);
      if (!failure) failure = std::current_exception();
      next.store(n_tasks);
    }
  };
  if (threads <= 1) {
    worker(0);
  } else {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (unsigned w = 0; w < threads; ++w) pool.emplace_back(worker, w);
  }
  if (failure) std::rethrow_exception(failure);
  std::vector<std::uint64_t> total(n_bins, 0);
  for (const auto& h : local) {
    for (std::size_t k = 0; k < n_bins; ++k) total[k] += h[k];
  }
  return total;
}

template <std::size_t Dim>
PairCountHistogram make_histogram(const BasicPointSet<Dim>& a, const BasicPointSet<Dim>& b, const BinGrid& bins,
                                  std::uint64_t total, const std::vector<std::uint64_t>& raw) {
  return PairCountHistogram{bins, std::vector<double>(raw.begin(), raw.end()), total, false, PairKind::DD,
                            a.provenance(), b.provenance()};
}

template <std::size_t Dim>
void require_nonempty(const BasicPointSet<Dim>& a, const BasicPointSet<Dim>& b) {
  if (a.empty() || b.empty()) throw InvalidArgument("pair counting needs non-empty point sets");
}

}  // namespace detail

// ---------------------------------------------------------------------------

/// Largest separation over all cross pairs (the exact maximum of the values
/// `separation` returns). Branch-and-bound over box trees.
template <std::size_t Dim>
SeparationScale max_separation(const BasicPointSet<Dim>& a, const BasicPointSet<Dim>& b,
                               ScaleSource source = ScaleSource::data_data) {
  detail::require_nonempty(a, b);
  const detail::BoxTree<Dim> ta(a.points(), 8), tb(b.points(), 8);
  double best = 0.0;
  std::vector<std::pair<std::int32_t, std::int32_t>> stack{{0, 0}};
  while (!stack.empty()) {
    const auto [ia, ib] = stack.back();
    stack.pop_back();
    const auto& na = ta.node(ia);
    const auto& nb = tb.node(ib);
    if (detail::separation_bounds<Dim>(na.lo, na.hi, nb.lo, nb.hi).second <= best) continue;
    if (na.leaf() && nb.leaf()) {
      for (auto i = na.begin; i < na.end; ++i) {
        for (auto j = nb.begin; j < nb.end; ++j) {
          best = std::max(best, separation<Dim>(ta.points()[i], tb.points()[j]));
        }
      }
    } else if (nb.leaf() || (!na.leaf() && na.count() >= nb.count())) {
      stack.push_back({na.left, ib});
      stack.push_back({na.right, ib});
    } else {
      stack.push_back({ia, nb.left});
      stack.push_back({ia, nb.right});
    }
  }
  if (!(best > 0.0)) throw InvalidArgument("all cross pairs coincide: maximum separation is zero");
  return SeparationScale(best, source);
}

/// Histogram of a set against itself: pairs i<j, each counted once.
template <std::size_t Dim>
PairCountHistogram self_pair_counts(const BasicPointSet<Dim>& a, const BinGrid& bins, const SeparationScale& scale) {
  detail::require_nonempty(a, a);
  std::vector<std::uint64_t> raw(bins.size(), 0);
  const auto& p = a.points();
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = i + 1; j < p.size(); ++j) {
      const double u = separation<Dim>(p[i], p[j]) / scale.r_max;
      if (u > 1.0) detail::throw_out_of_scale();
      ++raw[bins.index(u)];
    }
  }
  const std::uint64_t n = a.size();
  return detail::make_histogram(a, a, bins, n * (n - 1) / 2, raw);
}

/// Reference kernel: a plain double loop over every ordered cross pair.
/// Passing the same object twice switches to `self_pair_counts`.
template <std::size_t Dim>
PairCountHistogram cross_pair_counts(const BasicPointSet<Dim>& a, const BasicPointSet<Dim>& b, const BinGrid& bins,
                                     const SeparationScale& scale) {
  if (&a == &b) return self_pair_counts(a, bins, scale);
  detail::require_nonempty(a, b);
  std::vector<std::uint64_t> raw(bins.size(), 0);
  for (const auto& pa : a) {
    for (const auto& pb : b) {
      const double u = separation<Dim>(pa, pb) / scale.r_max;
      if (u > 1.0) detail::throw_out_of_scale();
      ++raw[bins.index(u)];
    }
  }
  return detail::make_histogram(a, b, bins, std::uint64_t{a.size()} * b.size(), raw);
}

template <std::size_t Dim>
PairCountHistogram self_pair_counts_accelerated(const BasicPointSet<Dim>& a, const BinGrid& bins,
                                                const SeparationScale& scale, PairCountOptions opt = {}) {
  detail::require_nonempty(a, a);
  const unsigned threads = detail::resolve_threads(opt.threads);
  const detail::BoxTree<Dim> tree(a.points(), opt.leaf_size);
  const auto front = tree.frontier(std::size_t{8} * threads);
  // task t < F: self(front[t]); afterwards the i<j cross pairs of the frontier.
  std::vector<std::pair<std::int32_t, std::int32_t>> tasks;
  for (std::size_t i = 0; i < front.size(); ++i) tasks.push_back({front[i], -1});
  for (std::size_t i = 0; i < front.size(); ++i) {
    for (std::size_t j = i + 1; j < front.size(); ++j) tasks.push_back({front[i], front[j]});
  }
  auto raw = detail::run_tasks(tasks.size(), bins.size(), threads, [&](std::size_t t, auto& hist) {
    detail::DualTreeCounter<Dim> counter(tree, tree, bins, scale.r_max, hist);
    if (tasks[t].second < 0) {
      counter.self(tasks[t].first);
    } else {
      counter.cross(tasks[t].first, tasks[t].second);
    }
  });
  const std::uint64_t n = a.size();
  return detail::make_histogram(a, a, bins, n * (n - 1) / 2, raw);
}

/// Dual-tree kernel. Box pairs whose whole separation range falls in one bin
/// are counted in bulk, everything else is refined down to point pairs.
/// Produces exactly the histogram of `cross_pair_counts` for any thread count.
template <std::size_t Dim>
PairCountHistogram cross_pair_counts_accelerated(const BasicPointSet<Dim>& a, const BasicPointSet<Dim>& b,
                                                 const BinGrid& bins, const SeparationScale& scale,
                                                 PairCountOptions opt = {}) {
  if (&a == &b) return self_pair_counts_accelerated(a, bins, scale, opt);
  detail::require_nonempty(a, b);
  const unsigned threads = detail::resolve_threads(opt.threads);
  const detail::BoxTree<Dim> ta(a.points(), opt.leaf_size), tb(b.points(), opt.leaf_size);
  const auto front = ta.frontier(std::size_t{8} * threads);
  auto raw = detail::run_tasks(front.size(), bins.size(), threads, [&](std::size_t t, auto& hist) {
    detail::DualTreeCounter<Dim>(ta, tb, bins, scale.r_max, hist).cross(front[t], 0);
  });
  return detail::make_histogram(a, b, bins, std::uint64_t{a.size()} * b.size(), raw);
}

inline PairCountHistogram normalize_counts(const PairCountHistogram& h) {
  if (h.normalized) throw InvalidArgument("histogram is already normalized");
  if (h.total_pairs == 0) throw InvalidArgument("cannot normalize a histogram with zero admissible pairs");
  PairCountHistogram out = h;
  const auto total = static_cast<double>(h.total_pairs);
  for (auto& c : out.counts) c /= total;
  out.normalized = true;
  return out;
}

/// Bin-wise mean of normalized histograms on one grid (random realizations).
inline PairCountHistogram average_histograms(std::span<const PairCountHistogram> hs) {
  if (hs.empty()) throw InvalidArgument("average of zero histograms");
  PairCountHistogram out = hs.front();
  for (std::size_t i = 1; i < hs.size(); ++i) {
    if (!(hs[i].bins == out.bins) || !hs[i].normalized) {
      throw InvalidArgument("averaging needs normalized histograms on one grid");
    }
    for (std::size_t k = 0; k < out.counts.size(); ++k) out.counts[k] += hs[i].counts[k];
  }
  if (!out.normalized) throw InvalidArgument("averaging needs normalized histograms on one grid");
  for (auto& c : out.counts) c /= static_cast<double>(hs.size());
  return out;
}

/// CSV with columns bin_lo, bin_hi, count, normalized_count.
inline void write_histogram_csv(std::ostream& out, const PairCountHistogram& h) {
  char buf[160];
  out << "bin_lo,bin_hi,count,normalized_count\n";
  const auto total = static_cast<double>(h.total_pairs);
  for (std::size_t k = 0; k < h.bins.size(); ++k) {
    const double raw = h.normalized ? h.counts[k] * total : h.counts[k];
    const double norm = h.normalized ? h.counts[k] : (total > 0 ? h.counts[k] / total : 0.0);
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g\n", h.bins.lo(k), h.bins.hi(k), raw, norm);
    out << buf;
  }
}

}  // namespace xcorr
