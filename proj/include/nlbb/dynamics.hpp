#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "nlbb/configspace.hpp"
#include "nlbb/path.hpp"

namespace nlbb {

// Pairwise enumerations (superposition, interpolation velocities) refuse when
// S^2 exceeds this cap.
inline constexpr Index kDefaultPairCap = 25'000'000;

// Maximum over intervals k and states n of the continuity-equation defect
//   |(rho_{k+1}(n) - rho_k(n)) pi(n)/dt - sum_j [w_k(n-e_j,j) pi(n-e_j) v_j
//                                               - w_k(n,j) pi(n) v_j]|
// in mass units. The interval velocity w_k is read as the midpoint sample, so
// smooth exactly-solving curves produce O(dt^2) residuals.
double ce_residual(const CEPath& path);

// Snapshot of the linear-intensity Poisson interpolation at time t: the
// truncated Poisson density with site intensity ((1-t) c0 + t c1) v_j together
// with the velocity w(n,j) = (c1 - c0) rho_t(n).
std::pair<DensityMeasure, VelocityDensity> poisson_path(SpacePtr space, double c0, double c1,
                                                        double t);

// Poisson interpolation sampled on `intervals` uniform intervals: densities at
// the knots, velocities at the interval midpoints.
CEPath sample_poisson_path(SpacePtr space, double c0, double c1, int intervals);

// Independent Bernoulli(p) retention of every point (p is the retention
// probability; deletion probability is 1 - p). Exact binomial mixture; the
// result never leaves the truncated set.
DensityMeasure thinning(const DensityMeasure& P, double p);

// Law together with the mass it lost at the occupancy ceiling.
struct ClippedMeasure {
  DensityMeasure law;
  double clip_defect = 0.0;
};

// Law of the sum of independent draws from P and Q on the same space. States
// whose total occupancy exceeds n_max are clipped; the surviving mass is
// renormalized and the clipped fraction reported. Throws ClipDefectError when
// the defect exceeds max_clip_defect.
ClippedMeasure superpose(const DensityMeasure& P, const DensityMeasure& Q,
                         double max_clip_defect = 0.999, Index pair_cap = kDefaultPairCap);

// superpose(thinning(P0, 1-t), thinning(P1, t)); reproduces the endpoints
// exactly at t = 0 and t = 1.
ClippedMeasure thinning_interpolation(const DensityMeasure& P0, const DensityMeasure& P1,
                                      double t, double max_clip_defect = 0.999,
                                      Index pair_cap = kDefaultPairCap);

// Velocity density of the thinning interpolation: in mass units
//   w(n,j) pi(n) v_j = E[#candidate P1 points at j, rest of the thinned pair
//                        equal to n]
//                    - E[#retained P0 points at j, thinned pair minus that
//                        point equal to n],
// with the expectation over independent draws (x, y) ~ P0 x P1 and the
// Bernoulli retention marks summed out exactly (binomial kernels). Pairs whose
// surviving total exceeds n_max are dropped, as are ceiling edges.
VelocityDensity thinning_velocity(const DensityMeasure& P0, const DensityMeasure& P1, double t,
                                  Index pair_cap = kDefaultPairCap);

// Thinning interpolation sampled on `intervals` uniform intervals: densities
// at the knots, velocities at the interval midpoints.
CEPath sample_thinning_path(const DensityMeasure& P0, const DensityMeasure& P1, int intervals,
                            double max_clip_defect = 0.999, Index pair_cap = kDefaultPairCap);

enum class OUMethod {
  // Integrates d/dt P = L* P for the reversible truncated birth-death
  // generator (births at rate v_j below the ceiling, unit per-point deaths);
  // exactly mass-conserving and invariant on the reference. Canonical method.
  generator,
  // Thins by e^{-t} and superposes an independent truncated Poisson of
  // intensity 1 - e^{-t}; exact for the untruncated process, clips at the
  // ceiling (defect reported through *clip_defect).
  closedform,
};

// Ornstein-Uhlenbeck evolution of P for time t >= 0. For the closedform
// method *clip_defect (when non-null) receives the full ceiling accounting:
// the clipped superposition mass, the reference-tail shortfall of the
// injected Poisson, and the birth flux the truncated generator suppresses at
// the ceiling; the generator method reports zero. Throws DomainError for
// negative t.
DensityMeasure ou_evolve(const DensityMeasure& P, double t, OUMethod method = OUMethod::generator,
                         double* clip_defect = nullptr);

struct ShiftInvariance {
  bool invariant = true;
  double max_deviation = 0.0;
};

// Checks invariance under every nontrivial cyclic lattice shift of the window
// (torus identification). The deviation is the sup-norm over entries of
// |w(sigma(n), sigma(j)) - w(n, j)| for velocities and of the shifted-vs-plain
// probability gap for measures. Throws WindowError when the site volumes are
// not constant (no torus identification exists).
ShiftInvariance is_shift_invariant(const VelocityDensity& V, double tol = 1e-10);
ShiftInvariance is_shift_invariant(const DensityMeasure& P, double tol = 1e-10);

}  // namespace nlbb
