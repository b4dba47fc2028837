#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "nlbb/measures.hpp"
#include "nlbb/rng.hpp"

using namespace nlbb;

namespace {

LatticeWindow window1d(int cells, double h = 1.0, int origin = 0) {
  return LatticeWindow{1, {cells}, h, {origin}};
}

}  // namespace

TEST_CASE("entropy of the reference is zero and pointmass entropy is -log pi") {
  auto sp = build_space(window1d(1), 2);
  CHECK(entropy(uniform_density(sp)) == 0.0);
  // pi(0) = 0.4, so Ent(delta_0) = -log(0.4)
  CHECK(entropy(pointmass(sp, 0)) ==
        doctest::Approx(0.91629073187415507).epsilon(1e-14));
}

TEST_CASE("entropy of a truncated Poisson matches the direct series") {
  // intensity 2 per unit volume against the unit-intensity reference;
  // the untruncated value is 2 log 2 - 1 = 0.38629436...
  auto sp = build_space(window1d(1, 1.0), 12);
  const double e1 = entropy(poisson_density(sp, 2.0)) / sp->total_volume();
  CHECK(e1 == doctest::Approx(0.38629296408855782).epsilon(1e-13));
  // at unit cell volume the occupancy ceiling shifts the value by ~1.4e-6
  CHECK(std::abs(e1 - (2 * std::log(2.0) - 1.0)) < 2e-6);

  // a smaller cell pushes the ceiling deep into the tail: bias < 1e-7
  auto sp2 = build_space(window1d(1, 0.75), 12);
  const double e2 = entropy(poisson_density(sp2, 2.0)) / sp2->total_volume();
  CHECK(e2 == doctest::Approx(0.38629428773566821).epsilon(1e-13));
  CHECK(std::abs(e2 - (2 * std::log(2.0) - 1.0)) < 1e-6);
}

TEST_CASE("entropy is nonnegative and convex in the density") {
  auto sp = build_space(window1d(3, 0.6), 3);
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto P = random_density(sp, seed, 0.5 + (seed % 5));
    CHECK(entropy(P) >= 0.0);
  }
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto P = random_density(sp, 1000 + seed);
    const auto Q = random_density(sp, 2000 + seed);
    const double t = 0.3;
    const auto M = mixture({t, 1 - t}, {P, Q});
    CHECK(entropy(M) <= t * entropy(P) + (1 - t) * entropy(Q) + 1e-10);
  }
}

TEST_CASE("entropy is invariant under torus shifts") {
  auto sp = build_space(window1d(4, 0.5), 3);
  const auto P = random_density(sp, 7);
  const std::vector<int> z{3};
  CHECK(entropy(shift_torus(P, z)) == doctest::Approx(entropy(P)).epsilon(1e-14));
}

TEST_CASE("fisher information: frozen two-state value and conventions") {
  auto sp = build_space(window1d(1), 1);
  CHECK(fisher(uniform_density(sp)).value == 0.0);
  CHECK(fisher(uniform_density(sp)).in_domain);

  DensityMeasure P{sp, {1.2, 0.8}};
  REQUIRE(P.valid(1e-12));
  const auto fi = fisher(P);
  CHECK(fi.in_domain);
  // (0.8 - 1.2)(log 0.8 - log 1.2) * 0.5 * 1
  CHECK(fi.value == doctest::Approx(0.081093021621632876).epsilon(1e-14));

  // a zero adjacent to positive mass is outside the domain
  const auto bad = fisher(pointmass(sp, 0));
  CHECK_FALSE(bad.in_domain);
  CHECK(bad.value == kFisherSentinel);
  CHECK(fisher(pointmass(sp, 0), 1e12).value == 1e12);
}

TEST_CASE("fisher is nonnegative on positive densities") {
  auto sp = build_space(window1d(2, 0.8), 4);
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto fi = fisher(random_density(sp, seed));
    CHECK(fi.in_domain);
    CHECK(fi.value >= 0.0);
  }
}

TEST_CASE("laplace functional: normalization, closed form, monotonicity") {
  auto sp = build_space(window1d(1), 12);
  const auto ref = uniform_density(sp);
  const std::vector<double> zero{0.0};
  CHECK(laplace(ref, zero) == doctest::Approx(1.0).epsilon(1e-13));

  // truncated sum vs the untruncated closed form exp(-v(1 - e^{-f}))
  const std::vector<double> f{0.7};
  CHECK(laplace(ref, f) == doctest::Approx(0.60446307390475938).epsilon(1e-13));
  CHECK(std::abs(laplace(ref, f) - std::exp(-(1.0 - std::exp(-0.7)))) < 1e-9);

  auto sp2 = build_space(window1d(2), 2);
  const std::vector<double> f2{0.3, 0.9};
  CHECK(laplace(uniform_density(sp2), f2) ==
        doctest::Approx(0.56112747089846511).epsilon(1e-13));

  SplitMix64 gen(42);
  for (int rep = 0; rep < 30; ++rep) {
    const auto P = random_density(sp2, 500 + rep);
    std::vector<double> lo(2), hi(2);
    for (int j = 0; j < 2; ++j) {
      lo[j] = 2.0 * gen.uniform01();
      hi[j] = lo[j] + gen.uniform01();
    }
    const double ll = laplace(P, lo), lh = laplace(P, hi);
    CHECK(ll >= lh);
    CHECK(lh > 0.0);
    CHECK(ll <= 1.0 + 1e-12);
  }
}

TEST_CASE("laplace values on a factorial grid determine the measure") {
  auto sp = build_space(window1d(2), 2);
  const Index S = sp->size();
  const std::vector<double> grid{0.0, 0.5, 1.0, 2.0};
  std::vector<std::vector<double>> fs;
  for (double a : grid)
    for (double b : grid) fs.push_back({a, b});

  // linear map from the probability vector to the laplace values
  Eigen::MatrixXd A(fs.size(), S);
  for (std::size_t k = 0; k < fs.size(); ++k)
    for (Index i = 0; i < S; ++i) {
      const auto st = sp->state(i);
      A(static_cast<Eigen::Index>(k), i) = std::exp(-(fs[k][0] * st[0] + fs[k][1] * st[1]));
    }

  const auto P = random_density(sp, 99);
  Eigen::VectorXd vals(fs.size());
  for (std::size_t k = 0; k < fs.size(); ++k)
    vals(static_cast<Eigen::Index>(k)) = laplace(P, fs[k]);

  Eigen::VectorXd prob = A.colPivHouseholderQr().solve(vals);
  double tv = 0;
  for (Index i = 0; i < S; ++i) tv += std::abs(prob(i) - P.prob(i));
  CHECK(tv / 2 < 1e-10);
}

TEST_CASE("intensity: truncated reference mean, products, pointmasses") {
  auto sp = build_space(window1d(1), 3);
  CHECK(intensity(uniform_density(sp))[0] == doctest::Approx(0.9375).epsilon(1e-14));

  auto a = build_space(window1d(1, 1.0, 0), 3);
  auto b = build_space(window1d(1, 1.0, 1), 3);
  DensityMeasure P{a, {0.7 / a->reference_weights()[0], 0.3 / a->reference_weights()[1], 0, 0}};
  DensityMeasure Q{b, {0.1 / b->reference_weights()[0], 0.5 / b->reference_weights()[1],
                       0.4 / b->reference_weights()[2], 0}};
  double defect = -1;
  const auto PQ = product_measure(P, Q, &defect);
  REQUIRE(defect == doctest::Approx(0.0).epsilon(1e-15));
  const auto ii = intensity(PQ);
  CHECK(ii[0] == doctest::Approx(intensity(P)[0]).epsilon(1e-13));
  CHECK(ii[1] == doctest::Approx(intensity(Q)[0]).epsilon(1e-13));

  auto sp3 = build_space(window1d(3, 0.5), 4);
  const std::vector<int> occ{2, 0, 1};
  const auto i3 = intensity(pointmass(sp3, sp3->index_of(occ)));
  CHECK(i3[0] == 2.0);
  CHECK(i3[1] == 0.0);
  CHECK(i3[2] == 1.0);
}

TEST_CASE("entropy adds over products up to the joint truncation constant") {
  auto a = build_space(window1d(1, 1.0, 0), 4);
  auto b = build_space(window1d(1, 1.0, 1), 4);
  DensityMeasure P{a, {0.6 / a->reference_weights()[0], 0.4 / a->reference_weights()[1], 0, 0, 0}};
  DensityMeasure Q{b, {0.2 / b->reference_weights()[0], 0.8 / b->reference_weights()[1], 0, 0, 0}};
  double defect = -1;
  const auto PQ = product_measure(P, Q, &defect);
  REQUIRE(defect == doctest::Approx(0.0).epsilon(1e-15));

  // sharing one occupancy budget across the union rescales the joint
  // reference: Ent(PxQ) = Ent(P) + Ent(Q) + log(1 - d_ref) where d_ref is the
  // cross mass the product of references loses to the ceiling
  double d_ref = -1;
  (void)product_measure(uniform_density(a), uniform_density(b), &d_ref);
  const double offset = std::log1p(-d_ref);
  CHECK(entropy(PQ) ==
        doctest::Approx(entropy(P) + entropy(Q) + offset).epsilon(1e-13));
  CHECK(std::abs(entropy(PQ) - entropy(P) - entropy(Q)) <= std::abs(offset) + 1e-13);

  // deep ceiling: the offset itself vanishes and additivity becomes exact
  auto a2 = build_space(window1d(1, 0.3, 0), 12);
  auto b2 = build_space(window1d(1, 0.3, 1), 12);
  const auto P2 = random_density(a2, 11);
  const auto Q2 = random_density(b2, 12);
  double d2 = -1;
  const auto PQ2 = product_measure(P2, Q2, &d2);
  double dref2 = -1;
  (void)product_measure(uniform_density(a2), uniform_density(b2), &dref2);
  CHECK(std::abs(entropy(PQ2) - entropy(P2) - entropy(Q2)) <=
        std::abs(std::log1p(-dref2)) + 10 * d2 + 1e-12);
}

TEST_CASE("campbell table and the discrete Mecke identity") {
  auto sp = build_space(window1d(3, 0.7), 3);
  const auto P = random_density(sp, 31);
  const auto C = campbell(P);
  const auto CM = campbell_mecke(P);

  REQUIRE(C.values.size() == CM.values.size());
  for (std::size_t k = 0; k < C.values.size(); ++k) {
    const double scale = std::max({std::abs(C.values[k]), std::abs(CM.values[k]), 1e-300});
    CHECK(std::abs(C.values[k] - CM.values[k]) / scale <= 1e-12);
    CHECK(C.values[k] >= 0.0);
  }

  // column sums reproduce the intensity; total mass is the intensity mass
  const auto ii = intensity(P);
  for (int j = 0; j < sp->sites(); ++j) {
    long double col = 0;
    for (Index n = 0; n < sp->size(); ++n) col += C.at(n, j);
    CHECK(static_cast<double>(col) == doctest::Approx(ii[j]).epsilon(1e-13));
  }
  double imass = 0;
  for (double v : ii) imass += v;
  CHECK(C.total_mass() == doctest::Approx(imass).epsilon(1e-13));
}

TEST_CASE("total variation distance") {
  auto sp = build_space(window1d(2), 2);
  const auto P = random_density(sp, 5);
  CHECK(tv_distance(P, P) == 0.0);
  CHECK(tv_distance(pointmass(sp, 0), pointmass(sp, 3)) == doctest::Approx(1.0).epsilon(1e-14));
  const auto Q = random_density(sp, 6);
  CHECK(tv_distance(P, Q) == tv_distance(Q, P));
  CHECK(tv_distance(P, Q) <= 1.0);
  auto other = build_space(window1d(3), 2);
  CHECK_THROWS_AS(tv_distance(P, uniform_density(other)), ConfigError);
}
