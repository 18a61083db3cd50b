#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "xcorr/error.hpp"
#include "xcorr/points.hpp"
#include "xcorr/rng.hpp"

namespace xcorr {

struct RandomSpec {
  std::size_t n_points = 0;
  std::uint64_t seed = 0;
  std::optional<AxisRange<2>> ranges;  // defaults to the source's per-axis min/max
};

struct RandomSet {
  PointSet points;
  AxisRange<2> ranges;
  std::uint64_t seed = 0;
  std::string generator = SplitMix64::kAlgorithmId;
  std::vector<std::string> warnings;
};

/// Uniform comparison catalog over the per-axis ranges of `source`. Each point
/// draws axis 0 then axis 1 from one SplitMix64 stream seeded with spec.seed.
inline RandomSet generate_randoms(const PointSet& source, const RandomSpec& spec) {
  if (spec.n_points == 0) throw InvalidArgument("random catalog needs n_points >= 1");
  if (!spec.ranges && source.empty()) throw InvalidArgument("random catalog: empty source point set");
  RandomSet out;
  out.ranges = spec.ranges ? *spec.ranges : source.bounds();
  out.seed = spec.seed;
  for (std::size_t d = 0; d < 2; ++d) {
    if (!(out.ranges.hi[d] >= out.ranges.lo[d])) throw InvalidArgument("random catalog: range max < min");
    if (out.ranges.hi[d] == out.ranges.lo[d]) {
      out.warnings.push_back("axis " + std::to_string(d) + " has a degenerate range; coordinates are constant");
    }
  }
  SplitMix64 rng(spec.seed);
  std::vector<Point<2>> pts(spec.n_points);
  for (auto& p : pts) {
    for (std::size_t d = 0; d < 2; ++d) {
      const double lo = out.ranges.lo[d], hi = out.ranges.hi[d];
      p[d] = std::min(hi, lo + (hi - lo) * rng.uniform());
    }
  }
  out.points = PointSet(std::move(pts), "randoms#" + std::to_string(spec.seed));
  return out;
}

inline nlohmann::json random_set_metadata(const RandomSet& r) {
  return {
      {"schema_version", 1},
      {"generator", r.generator},
      {"seed", r.seed},
      {"n_points", r.points.size()},
      {"ranges", {{r.ranges.lo[0], r.ranges.hi[0]}, {r.ranges.lo[1], r.ranges.hi[1]}}},
      {"warnings", r.warnings},
  };
}

}  // namespace xcorr
