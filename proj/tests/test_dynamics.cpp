#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <bit>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "nlbb/configspace.hpp"
#include "nlbb/dynamics.hpp"
#include "nlbb/measures.hpp"
#include "nlbb/mobility.hpp"

using namespace nlbb;

namespace {

SpacePtr line(int cells, int n_max, std::vector<double> volumes = {}) {
  LatticeWindow w;
  w.dim = 1;
  w.cells_per_axis = {cells};
  w.cell_side = 1.0;
  return build_space(w, n_max, std::move(volumes));
}

// Probability measure from an explicit sparse support.
DensityMeasure sparse_measure(SpacePtr sp,
                              const std::vector<std::pair<std::vector<int>, double>>& entries) {
  DensityMeasure P{sp, std::vector<double>(static_cast<std::size_t>(sp->size()), 0.0)};
  const auto& pi = sp->reference_weights();
  for (const auto& [occ, prob] : entries) {
    const Index i = sp->index_of(occ);
    REQUIRE(i != kBoundary);
    P.rho[static_cast<std::size_t>(i)] = prob / pi[static_cast<std::size_t>(i)];
  }
  REQUIRE(P.mass() == doctest::Approx(1.0).epsilon(1e-12));
  return P;
}

// Least-squares slope of log(residual) against log(1/K): the observed
// convergence order of a grid refinement study.
double observed_order(const std::vector<int>& grids, const std::vector<double>& residuals) {
  const int n = static_cast<int>(grids.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    const double x = std::log(1.0 / grids[static_cast<std::size_t>(i)]);
    const double y = std::log(residuals[static_cast<std::size_t>(i)]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

std::vector<double> refinement_residuals(const std::vector<int>& grids,
                                         const DensityMeasure& P0, const DensityMeasure& P1) {
  std::vector<double> out;
  for (int K : grids) out.push_back(ce_residual(sample_thinning_path(P0, P1, K)));
  return out;
}

// Direct subset-sum form of the interpolation's Laplace transform: every point
// of x kept with probability 1-t, every point of y with probability t, all
// 2^{|x|} * 2^{|y|} retention patterns enumerated explicitly.
double bernoulli_mixture_laplace(const DensityMeasure& P0, const DensityMeasure& P1, double t,
                                 const std::vector<double>& f) {
  const ConfigSpace& sp = *P0.space;
  auto point_list = [&](Index i) {
    std::vector<int> pts;
    auto occ = sp.state(i);
    for (int j = 0; j < sp.sites(); ++j)
      for (int c = 0; c < occ[j]; ++c) pts.push_back(j);
    return pts;
  };
  double total = 0.0;
  for (Index i = 0; i < sp.size(); ++i) {
    const double p0 = P0.prob(i);
    if (p0 == 0.0) continue;
    const std::vector<int> xs = point_list(i);
    for (Index k = 0; k < sp.size(); ++k) {
      const double p1 = P1.prob(k);
      if (p1 == 0.0) continue;
      const std::vector<int> ys = point_list(k);
      double pair = 0.0;
      for (unsigned J = 0; J < (1u << xs.size()); ++J) {
        for (unsigned K = 0; K < (1u << ys.size()); ++K) {
          const int nJ = std::popcount(J);
          const int nK = std::popcount(K);
          double expo = 0.0;
          for (std::size_t b = 0; b < xs.size(); ++b)
            if (J & (1u << b)) expo += f[static_cast<std::size_t>(xs[b])];
          for (std::size_t b = 0; b < ys.size(); ++b)
            if (K & (1u << b)) expo += f[static_cast<std::size_t>(ys[b])];
          pair += std::pow(t, static_cast<double>(xs.size()) - nJ + nK) *
                  std::pow(1.0 - t, static_cast<double>(ys.size()) - nK + nJ) * std::exp(-expo);
        }
      }
      total += p0 * p1 * pair;
    }
  }
  return total;
}

double max_flux_divergence(const VelocityDensity& V) {
  const ConfigSpace& sp = *V.space;
  const auto& pi = sp.reference_weights();
  const auto& vol = sp.site_volumes();
  double worst = 0.0;
  for (Index i = 0; i < sp.size(); ++i) {
    double div = 0.0;
    for (int j = 0; j < sp.sites(); ++j) {
      if (sp.add_point(i, j) != kBoundary)
        div -= V.at(i, j) * pi[static_cast<std::size_t>(i)] * vol[static_cast<std::size_t>(j)];
      const Index dn = sp.remove_point(i, j);
      if (dn != kBoundary)
        div += V.at(dn, j) * pi[static_cast<std::size_t>(dn)] * vol[static_cast<std::size_t>(j)];
    }
    worst = std::max(worst, std::abs(div));
  }
  return worst;
}

}  // namespace

TEST_CASE("continuity residual: constant paths vanish, mismatches are visible") {
  auto sp = line(2, 6);
  CEPath path;
  path.space = sp;
  path.knots = uniform_knots(4);
  path.densities.assign(5, uniform_density(sp));
  path.velocities.assign(4, zero_velocity(sp));
  CHECK(ce_residual(path) == 0.0);

  path.densities[0] = random_density(sp, 17);
  path.densities[4] = random_density(sp, 18);
  CHECK(ce_residual(path) > 0.01);
}

TEST_CASE("poisson path: endpoints, constant case, second-order residual") {
  auto sp = line(1, 12);

  auto [rho0, w0] = poisson_path(sp, 0.6, 1.8, 0.0);
  auto [rho1, w1] = poisson_path(sp, 0.6, 1.8, 1.0);
  CHECK(tv_distance(rho0, poisson_density(sp, 0.6)) <= 1e-15);
  CHECK(tv_distance(rho1, poisson_density(sp, 1.8)) <= 1e-15);

  auto [rc, wc] = poisson_path(sp, 1.1, 1.1, 0.37);
  for (double v : wc.w) CHECK(v == 0.0);
  CHECK(tv_distance(rc, poisson_density(sp, 1.1)) <= 1e-15);

  const std::vector<int> grids = {16, 32, 64, 128};
  std::vector<double> res;
  for (int K : grids) res.push_back(ce_residual(sample_poisson_path(sp, 0.6, 1.8, K)));
  CHECK(res[2] <= 1e-4);
  CHECK(observed_order(grids, res) >= 1.8);
  for (std::size_t i = 1; i < res.size(); ++i) CHECK(res[i] < res[i - 1]);

  auto sp2 = line(2, 12);
  std::vector<double> res2;
  for (int K : grids) res2.push_back(ce_residual(sample_poisson_path(sp2, 0.3, 0.9, K)));
  CHECK(res2[2] <= 1e-4);
  CHECK(observed_order(grids, res2) >= 1.8);

  CHECK_THROWS_AS(poisson_path(sp, -1.0, 1.0, 0.5), ConfigError);
  CHECK_THROWS_AS(poisson_path(sp, 1.0, 1.0, 1.5), DomainError);
}

TEST_CASE("thinning: identity, empty limit, composition, truncated poisson law") {
  auto sp = line(1, 12);
  auto P = random_density(sp, 4);

  CHECK(tv_distance(thinning(P, 1.0), P) <= 1e-15);

  auto empty = thinning(P, 0.0);
  CHECK(empty.prob(0) == doctest::Approx(1.0).epsilon(1e-14));

  // Retention composes multiplicatively and exactly.
  CHECK(tv_distance(thinning(thinning(P, 0.8), 0.5), thinning(P, 0.4)) <= 1e-14);

  // Thinning the truncated Poisson with intensity 1.4 by one half: frozen
  // exact mixture values, and total-variation distance to the truncated
  // intensity-0.7 law of the order of the 1.4-law's truncation mass.
  auto thinned = thinning(poisson_density(sp, 1.4), 0.5);
  CHECK(thinned.prob(0) == doctest::Approx(0.49658530552391534437).epsilon(1e-14));
  CHECK(thinned.prob(1) == doctest::Approx(0.3476097138617527544).epsilon(1e-14));
  CHECK(thinned.prob(5) == doctest::Approx(0.00069550856740726804623).epsilon(1e-13));
  const double tail = 3.4896514704741569689e-9;  // untruncated Poi(1.4) mass beyond 12
  CHECK(tv_distance(thinned, poisson_density(sp, 0.7)) <= 2.0 * tail);

  CHECK(std::abs(thinning(P, 0.37).mass() - 1.0) <= 1e-12);
  CHECK_THROWS_AS(thinning(P, 1.2), DomainError);
  CHECK_THROWS_AS(thinning(P, -0.1), DomainError);
}

TEST_CASE("superposition: neutral element, commutativity, poisson exactness, defect") {
  auto sp = line(1, 4);
  auto A = poisson_density(sp, 0.5);

  // Superposing with the empty configuration changes nothing and clips nothing.
  DensityMeasure empty = pointmass(sp, 0);
  auto neutral = superpose(A, empty);
  CHECK(neutral.clip_defect == 0.0);
  CHECK(tv_distance(neutral.law, A) <= 1e-15);

  auto ab = superpose(A, poisson_density(sp, 0.5));
  auto ba = superpose(poisson_density(sp, 0.5), A);
  CHECK(tv_distance(ab.law, ba.law) <= 1e-14);

  // The clipped-and-renormalized superposition of truncated Poisson laws is
  // exactly the truncated Poisson at the summed intensity; the clipped mass
  // has a closed form, frozen here from exact arithmetic.
  CHECK(tv_distance(ab.law, poisson_density(sp, 1.0)) <= 1e-14);
  CHECK(ab.clip_defect == doctest::Approx(0.0033167868346772684052).epsilon(1e-13));

  // Two point masses at the ceiling clip everything.
  DensityMeasure top = pointmass(sp, sp->size() - 1);
  CHECK_THROWS_AS(superpose(top, top, 0.5), ClipDefectError);
  CHECK_THROWS_AS(superpose(top, top), ClipDefectError);
  CHECK_THROWS_AS(superpose(A, A, 0.999, /*pair_cap=*/10), SizingError);

  auto other = line(1, 5);
  CHECK_THROWS_AS(superpose(A, poisson_density(other, 0.5)), ConfigError);
}

TEST_CASE("thinning interpolation: endpoints, poisson fixed point, subset-sum laplace") {
  auto sp = line(1, 12);
  auto P0 = poisson_density(sp, 0.9);
  auto P1 = random_density(sp, 23);

  CHECK(tv_distance(thinning_interpolation(P0, P1, 0.0).law, P0) <= 1e-14);
  CHECK(tv_distance(thinning_interpolation(P0, P1, 1.0).law, P1) <= 1e-14);

  // Interpolating the reference with itself stays at the reference, up to the
  // truncation of the thinned laws.
  auto ref = uniform_density(sp);
  for (double t : {0.25, 0.5, 0.75}) {
    auto mid = thinning_interpolation(ref, ref, t);
    CHECK(tv_distance(mid.law, ref) <= 10.0 * sp->truncation_mass() + 1e-13);
    CHECK(std::abs(mid.law.mass() - 1.0) <= 1e-12);
  }

  // Und clipping-free supports: the Laplace transform of the interpolant
  // agrees with the explicit Bernoulli retention mixture, every subset of the
  // point pattern enumerated directly.
  auto sp2 = line(2, 3);
  auto Q0 = sparse_measure(
      sp2, {{{0, 0}, 0.30}, {{1, 0}, 0.25}, {{0, 1}, 0.15}, {{1, 1}, 0.18}, {{2, 0}, 0.12}});
  auto Q1 = sparse_measure(sp2, {{{0, 0}, 0.5}, {{0, 1}, 0.2}, {{1, 0}, 0.3}});
  for (double t : {0.3, 0.62}) {
    auto mid = thinning_interpolation(Q0, Q1, t);
    CHECK(mid.clip_defect == 0.0);
    for (const std::vector<double>& f :
         {std::vector<double>{0.7, 1.3}, std::vector<double>{0.05, 2.4}}) {
      const double direct = bernoulli_mixture_laplace(Q0, Q1, t, f);
      CHECK(laplace(mid.law, f) == doctest::Approx(direct).epsilon(1e-13));
    }
  }
}

TEST_CASE("thinning velocity: exact continuity on clip-free supports") {
  auto sp = line(1, 4);
  auto P0 = sparse_measure(sp, {{{0}, 0.4}, {{1}, 0.6}});
  auto P1 = sparse_measure(sp, {{{0}, 0.7}, {{1}, 0.3}});
  const auto& pi = sp->reference_weights();

  const double t = 0.37;
  auto V = thinning_velocity(P0, P1, t);
  const double h = 1e-3;
  double worst = 0.0;
  for (Index i = 0; i < sp->size(); ++i) {
    auto pm = [&](double tt) { return thinning_interpolation(P0, P1, tt).law.prob(i); };
    const double der =
        (-pm(t + 2 * h) + 8 * pm(t + h) - 8 * pm(t - h) + pm(t - 2 * h)) / (12 * h);
    double div = 0.0;
    if (sp->add_point(i, 0) != kBoundary) div -= V.at(i, 0) * pi[static_cast<std::size_t>(i)];
    const Index dn = sp->remove_point(i, 0);
    if (dn != kBoundary) div += V.at(dn, 0) * pi[static_cast<std::size_t>(dn)];
    worst = std::max(worst, std::abs(der - div));
  }
  CHECK(worst <= 1e-12);
  CHECK(V.structurally_valid());
}

TEST_CASE("thinning velocity: poisson laws give a nearly constant path") {
  auto sp = line(1, 12);
  auto P = poisson_density(sp, 1.4);
  for (double t : {0.25, 0.8}) {
    CHECK(max_flux_divergence(thinning_velocity(P, P, t)) <= 1e-7);
    CHECK(tv_distance(thinning_interpolation(P, P, t).law, P) <= 1e-7);
  }
  // At the midpoint the two thinned halves are exchangeable: exact balance.
  CHECK(max_flux_divergence(thinning_velocity(P, P, 0.5)) <= 1e-15);

  // For arbitrary laws the interpolation between a law and itself is
  // symmetric about t = 1/2.
  auto sp2 = line(2, 8);
  auto R = random_density(sp2, 100);
  CHECK(tv_distance(thinning_interpolation(R, R, 0.31).law,
                    thinning_interpolation(R, R, 0.69).law) <= 1e-14);
}

TEST_CASE("thinning path: second-order residual decay") {
  const std::vector<int> grids = {16, 32, 64, 128};

  auto sp = line(1, 12);
  auto res = refinement_residuals(grids, poisson_density(sp, 0.7), random_density(sp, 11));
  CHECK(res[2] <= 1e-4);
  CHECK(observed_order(grids, res) >= 1.8);

  auto sp2 = line(2, 10);
  auto res2 = refinement_residuals(grids, poisson_density(sp2, 0.4), random_density(sp2, 5));
  CHECK(res2[2] <= 1e-4);
  CHECK(observed_order(grids, res2) >= 1.8);

  CHECK_THROWS_AS(
      thinning_velocity(poisson_density(sp, 0.7), random_density(sp, 11), 0.5, /*pair_cap=*/10),
      SizingError);
}

TEST_CASE("ou evolution: identity, invariant law, semigroup, frozen integrator oracle") {
  auto sp = line(1, 12);
  auto P = random_density(sp, 3);

  CHECK(tv_distance(ou_evolve(P, 0.0), P) == 0.0);
  CHECK_THROWS_AS(ou_evolve(P, -0.1), DomainError);

  auto ref = uniform_density(sp);
  for (double t : {0.3, 1.0, 5.0}) CHECK(tv_distance(ou_evolve(ref, t), ref) <= 1e-10);

  CHECK(tv_distance(ou_evolve(ou_evolve(P, 0.4), 0.9), ou_evolve(P, 1.3)) <= 1e-8);
  CHECK(std::abs(ou_evolve(P, 0.8).mass() - 1.0) <= 1e-12);

  // Four-state birth-death chain from a two-point initial state at time 0.7;
  // the expected law is frozen from exact matrix-exponential arithmetic.
  auto small = line(1, 3);
  auto start = pointmass(small, small->index_of(std::vector<int>{2}));
  auto evolved = ou_evolve(start, 0.7);
  const double expected[] = {0.15417167195338424815, 0.38458236364547352672,
                             0.33202724927923733966, 0.12921871512190488547};
  for (Index i = 0; i < small->size(); ++i)
    CHECK(std::abs(evolved.prob(i) - expected[i]) <= 1e-10);

  // Intensities relax exponentially toward the reference intensity, up to
  // flux lost at the occupancy ceiling.
  auto sp2 = line(2, 12);
  auto Q = random_density(sp2, 9);
  const double t = 0.6;
  auto i0 = intensity(Q);
  auto i1 = intensity(ou_evolve(Q, t));
  for (int j = 0; j < 2; ++j)
    CHECK(std::abs(i1[static_cast<std::size_t>(j)] -
                   (std::exp(-t) * i0[static_cast<std::size_t>(j)] + (1.0 - std::exp(-t)))) <=
          1e-5);
}

TEST_CASE("ou evolution: generator and closed form agree within the clip defect") {
  auto sp = line(1, 12);
  REQUIRE(sp->truncation_mass() <= 1e-6);
  for (auto P : {random_density(sp, 3), poisson_density(sp, 1.7)}) {
    for (double t : {0.2, 1.0, 2.0}) {
      double defect = 0.0;
      auto gen = ou_evolve(P, t, OUMethod::generator);
      auto cf = ou_evolve(P, t, OUMethod::closedform, &defect);
      CHECK(defect > 0.0);
      CHECK(tv_distance(gen, cf) <= 10.0 * defect);
    }
  }
}

TEST_CASE("shift invariance: torus checks and stationarity propagation") {
  auto sp = line(3, 3);

  CHECK(is_shift_invariant(zero_velocity(sp)).invariant);

  auto [rho, w] = poisson_path(sp, 0.5, 1.5, 0.3);
  CHECK(is_shift_invariant(w).invariant);
  CHECK(is_shift_invariant(rho).invariant);

  auto perturbed = w;
  perturbed.at(1, 0) += 0.05;
  auto verdict = is_shift_invariant(perturbed);
  CHECK_FALSE(verdict.invariant);
  CHECK(verdict.max_deviation >= 0.05 / 2);

  // Stationarizing a random law by averaging its torus shifts makes the whole
  // interpolation machinery shift-invariant: velocity and every knot density.
  auto R = random_density(sp, 42);
  std::vector<DensityMeasure> parts = {R, shift_torus(R, std::vector<int>{1}),
                                       shift_torus(R, std::vector<int>{2})};
  auto P1 = mixture({1.0 / 3, 1.0 / 3, 1.0 / 3}, parts);
  auto P0 = poisson_density(sp, 0.8);
  CHECK(is_shift_invariant(P1).invariant);
  CHECK(is_shift_invariant(thinning_velocity(P0, P1, 0.4)).invariant);
  auto path = sample_thinning_path(P0, P1, 8);
  for (const auto& d : path.densities) CHECK(is_shift_invariant(d).max_deviation <= 1e-10);

  auto lopsided = line(3, 2, {1.0, 2.0, 1.0});
  CHECK_THROWS_AS(is_shift_invariant(zero_velocity(lopsided)), WindowError);
}
