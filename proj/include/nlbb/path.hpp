#pragma once

#include <vector>

#include "nlbb/configspace.hpp"

namespace nlbb {

// Signed velocity density w over (state, site) pairs; V = w * (pi x v).
// Entries on pairs whose target state would leave the truncated set are
// structurally zero.
struct VelocityDensity {
  SpacePtr space;
  std::vector<double> w;  // flat, size S * m

  double at(Index n, int j) const {
    return w[static_cast<std::size_t>(n) * space->sites() + j];
  }
  double& at(Index n, int j) {
    return w[static_cast<std::size_t>(n) * space->sites() + j];
  }
  // Finite entries, zeros on missing edges.
  bool structurally_valid() const;
};

VelocityDensity zero_velocity(SpacePtr space);

// Discrete curve of measures: densities on time knots 0 = t_0 < ... < t_K = 1,
// velocities on the midpoints of the intervals.
struct CEPath {
  SpacePtr space;
  std::vector<double> knots;
  std::vector<DensityMeasure> densities;   // K + 1 entries
  std::vector<VelocityDensity> velocities; // K entries

  int intervals() const { return static_cast<int>(velocities.size()); }
  // Throws ConfigError when the grid or the ingredient shapes are malformed.
  void validate(double mass_tol = 1e-9) const;
};

std::vector<double> uniform_knots(int intervals);

}  // namespace nlbb
