#pragma once

#include <span>
#include <vector>

#include "nlbb/configspace.hpp"

namespace nlbb {

// Value reported for measures outside the Fisher domain (a vanishing density
// adjacent to a positive one makes the information infinite).
inline constexpr double kFisherSentinel = 1e300;

struct FisherInfo {
  double value = 0.0;
  bool in_domain = true;
};

// Reduced Campbell table C(n, j) over (state, site) pairs with n + e_j inside
// the space; entries on missing edges are zero.
struct CampbellTable {
  SpacePtr space;
  std::vector<double> values;  // flat, size S * m

  double at(Index n, int j) const {
    return values[static_cast<std::size_t>(n) * space->sites() + j];
  }
  double total_mass() const;
};

// Relative entropy sum rho log rho pi, with 0 log 0 = 0. Nonnegative for any
// probability density by Jensen.
double entropy(const DensityMeasure& P);

// Modified Fisher information: sum over edges of
//   (rho(n+e_j) - rho(n)) * (log rho(n+e_j) - log rho(n)) * pi(n) * v_j.
// Edges with both densities zero contribute nothing; an edge with exactly one
// zero endpoint puts the measure outside the domain and the sentinel is
// returned with in_domain = false.
FisherInfo fisher(const DensityMeasure& P, double sentinel = kFisherSentinel);

// Laplace functional: sum over states of rho pi exp(-<f, n>), one f entry per
// site, f >= 0. Lies in (0, 1] and determines the measure.
double laplace(const DensityMeasure& P, std::span<const double> f);

// Expected occupancy per site: I_j = sum_n n_j rho(n) pi(n).
std::vector<double> intensity(const DensityMeasure& P);

// C(n, j) = rho(n+e_j) pi(n+e_j) (n_j + 1): mass of configurations weighted by
// their point count at j, indexed by the configuration minus that point.
CampbellTable campbell(const DensityMeasure& P);

// Same table computed through detailed balance: C(n, j) = rho(n+e_j) pi(n) v_j.
// Agrees with campbell() to roundoff; the equality is the discrete Mecke
// identity.
CampbellTable campbell_mecke(const DensityMeasure& P);

// Total variation distance (1/2) sum |rho_P - rho_Q| pi between measures on
// compatible spaces.
double tv_distance(const DensityMeasure& P, const DensityMeasure& Q);

}  // namespace nlbb
