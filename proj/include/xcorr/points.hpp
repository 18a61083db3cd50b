#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "xcorr/error.hpp"

namespace xcorr {

template <std::size_t Dim>
using Point = std::array<double, Dim>;

template <std::size_t Dim>
struct AxisRange {
  Point<Dim> lo{};
  Point<Dim> hi{};
};

/// Immutable set of transformed feature points. Coordinates are finite.
template <std::size_t Dim>
class BasicPointSet {
  static_assert(Dim >= 1);

 public:
  static constexpr std::size_t dimension = Dim;

  BasicPointSet() = default;

  explicit BasicPointSet(std::vector<Point<Dim>> points, std::string provenance = {})
      : points_(std::move(points)), provenance_(std::move(provenance)) {
    for (const auto& p : points_) {
      for (double v : p) {
        if (!std::isfinite(v)) throw InvalidArgument("point set: non-finite coordinate");
      }
    }
  }

  std::size_t size() const noexcept { return points_.size(); }
  bool empty() const noexcept { return points_.empty(); }
  const Point<Dim>& operator[](std::size_t i) const noexcept { return points_[i]; }
  std::span<const Point<Dim>> points() const noexcept { return points_; }
  auto begin() const noexcept { return points_.begin(); }
  auto end() const noexcept { return points_.end(); }
  const std::string& provenance() const noexcept { return provenance_; }

  /// Per-axis min/max; throws on an empty set.
  AxisRange<Dim> bounds() const {
    if (points_.empty()) throw InvalidArgument("point set: bounds of empty set");
    AxisRange<Dim> r{points_.front(), points_.front()};
    for (const auto& p : points_) {
      for (std::size_t d = 0; d < Dim; ++d) {
        if (p[d] < r.lo[d]) r.lo[d] = p[d];
        if (p[d] > r.hi[d]) r.hi[d] = p[d];
      }
    }
    return r;
  }

  /// Subset by index (indices may repeat, as in bootstrap resampling).
  BasicPointSet select(std::span<const std::size_t> idx) const {
    std::vector<Point<Dim>> out;
    out.reserve(idx.size());
    for (std::size_t i : idx) out.push_back(points_.at(i));
    BasicPointSet s;
    s.points_ = std::move(out);
    s.provenance_ = provenance_;
    return s;
  }

 private:
  std::vector<Point<Dim>> points_;
  std::string provenance_;
};

using PointSet = BasicPointSet<2>;

/// Euclidean separation. Every kernel funnels through this one expression so
/// the rounding of `a - b` and of the sum of squares is identical everywhere.
template <std::size_t Dim>
inline double separation(const Point<Dim>& a, const Point<Dim>& b) noexcept {
  double s = 0.0;
  for (std::size_t d = 0; d < Dim; ++d) {
    const double t = a[d] - b[d];
    s += t * t;
  }
  return std::sqrt(s);
}

/// Columns x0..x{Dim-1}, 17 significant digits.
template <std::size_t Dim>
void write_point_set_csv(std::ostream& out, const BasicPointSet<Dim>& s) {
  for (std::size_t d = 0; d < Dim; ++d) out << (d ? ",x" : "x") << d;
  out << '\n';
  char buf[32];
  for (const auto& p : s) {
    for (std::size_t d = 0; d < Dim; ++d) {
      std::snprintf(buf, sizeof buf, "%.17g", p[d]);
      out << (d ? "," : "") << buf;
    }
    out << '\n';
  }
}

}  // namespace xcorr
