#pragma once

#include <cmath>

#include <nlohmann/json.hpp>

#include "xcorr/error.hpp"

namespace xcorr {

// Dissipationless merger of an initial system with accreted material.
// eta is the accreted-to-initial mass ratio and epsilon the ratio of mean
// square speeds; the energy-weighted ratio entering the relations is
// eta * epsilon.

struct MergerParams {
  double eta = 0.0;
  double epsilon = 0.0;

  void validate() const {
    if (!std::isfinite(eta) || eta < 0.0) throw InvalidArgument("eta must be finite and >= 0");
    if (!std::isfinite(epsilon) || epsilon < 0.0) throw InvalidArgument("epsilon must be finite and >= 0");
  }
};

/// Final-to-initial ratios of <v^2>, gravitational radius and density.
struct MergerRatios {
  double v2_ratio = 1.0;
  double size_ratio = 1.0;
  double density_ratio = 1.0;
};

inline MergerRatios merger_ratios(const MergerParams& m) {
  m.validate();
  const double grow = 1.0 + m.eta;
  const double energy = 1.0 + m.eta * m.epsilon;
  return {energy / grow, grow * grow / energy, energy * energy * energy / (grow * grow * grow * grow * grow)};
}

/// eta >= 0 with (1+eta)^2 / (1+eta*epsilon) = target.
///
/// With x = 1+eta the condition is x^2 - target*epsilon*x - target*(1-epsilon) = 0,
/// whose larger root is taken.
inline double invert_for_eta(double size_ratio_target, double epsilon) {
  if (!std::isfinite(size_ratio_target) || !(size_ratio_target > 0.0)) {
    throw InvalidArgument("target size ratio must be finite and > 0");
  }
  if (!std::isfinite(epsilon) || epsilon < 0.0) throw InvalidArgument("epsilon must be finite and >= 0");
  const double t = size_ratio_target;
  const double half_b = 0.5 * t * epsilon;
  const double disc = half_b * half_b + t * (1.0 - epsilon);
  if (disc < 0.0) throw InvalidArgument("no real mass ratio reaches this size ratio");
  const double x = half_b + std::sqrt(disc);
  const double eta = x - 1.0;
  // Rounding can leave eta a few ulps below zero at target == 1.
  if (eta < 0.0) {
    if (eta > -1e-12) return 0.0;
    throw InvalidArgument("no non-negative mass ratio reaches this size ratio");
  }
  return eta;
}

inline nlohmann::json to_json(const MergerParams& p, const MergerRatios& r) {
  return {{"schema_version", 1},
          {"eta", p.eta},
          {"epsilon", p.epsilon},
          {"v2_ratio", r.v2_ratio},
          {"size_ratio", r.size_ratio},
          {"density_ratio", r.density_ratio}};
}

}  // namespace xcorr
