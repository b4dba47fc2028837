#pragma once

#include <vector>

#include "nlbb/configspace.hpp"
#include "nlbb/path.hpp"

namespace nlbb {

// Logarithmic mean (y - x)/(log y - log x); x on the diagonal; 0 when either
// argument vanishes. Symmetric, monotone, bounded by the arithmetic mean.
// Throws DomainError on negative input.
double log_mean(double x, double y);

// Mobility integrand |w|^2 / log_mean(x, y) with 0/0 = 0 and +infinity when
// the mean vanishes under a nonzero flux. Jointly convex and positively
// 1-homogeneous in (x, y, w).
double mobility_alpha(double x, double y, double w);

// Lagrange functional sum over edges of alpha(rho(n), rho(n+e_j), w(n,j))
// * pi(n) * v_j. Returns +infinity when any edge carries flux across a dead
// logarithmic mean.
double lagrangian(const DensityMeasure& P, const VelocityDensity& V);

// Trapezoidal-in-density action: sum_k dt_k * lagrangian((rho_k+rho_{k+1})/2,
// w_{k+1/2}).
double action(const CEPath& path);

// Marginal velocity on a sub-window: the (state, site) mass of V is summed
// over the complementary occupancies, then expressed as a density against the
// sub-reference. Pairs (P, V) restrict consistently: restriction maps
// continuity-equation solutions to solutions and never increases the
// Lagrangian (superadditivity over disjoint sub-windows).
VelocityDensity restrict_velocity(const VelocityDensity& V, const LatticeWindow& sub);

// Composite velocity of a product path: the A-part moves with V_P while the
// B-part rides along Q, and symmetrically. With supports clear of the joint
// occupancy ceiling, lagrangian(product, composite) = lagrangian(P, V_P) +
// lagrangian(Q, V_Q) exactly.
VelocityDensity product_velocity(const DensityMeasure& P, const VelocityDensity& VP,
                                 const DensityMeasure& Q, const VelocityDensity& VQ);

// Velocity counterpart of shift_torus: cells relabeled by the cyclic shift.
VelocityDensity shift_torus_velocity(const VelocityDensity& V, std::span<const int> z);

struct SpecificAction {
  std::vector<double> per_volume;  // action / window volume, per path
  double sup = 0.0;
};

// Per-volume actions of a family of window paths. Whenever one family window
// contains another, the endpoint densities must restrict consistently
// (checked to marginal_tol; ConfigError otherwise).
SpecificAction specific_action(const std::vector<CEPath>& paths, double marginal_tol = 1e-8);

}  // namespace nlbb
