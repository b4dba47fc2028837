#include <Eigen/SparseLU>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <vector>

#include "nlbb/solver.hpp"
#include "transport_core.hpp"

namespace nlbb {

namespace {

using detail::Staggered;
using detail::Vec;
using SpMat = Eigen::SparseMatrix<double>;

// Value, gradient, and Hessian of the smoothed per-cell mobility
// w^2 / theta(x + eps, y + eps); false when outside the domain.
struct CellEval {
  double val;
  double g[3];
  double h[3][3];
};

bool cell_eval(double x, double y, double w, double eps, CellEval& out) {
  const double X = x + eps, Y = y + eps;
  if (!(X > 0.0) || !(Y > 0.0)) return false;
  const auto t = detail::theta_eval(X, Y);
  const double ith = 1.0 / t.value;
  out.val = w * w * ith;
  out.g[0] = -w * w * t.gx * ith * ith;
  out.g[1] = -w * w * t.gy * ith * ith;
  out.g[2] = 2.0 * w * ith;
  // Hessian = (2/theta) k k^T - (w^2/theta^2) Hess(theta),
  // k = (-(w/theta) theta_x, -(w/theta) theta_y, 1); both parts PSD.
  const double kx = -w * ith * t.gx, ky = -w * ith * t.gy;
  const double c2 = 2.0 * ith;
  const double cw = w * w * ith * ith;
  out.h[0][0] = c2 * kx * kx - cw * t.hxx;
  out.h[0][1] = out.h[1][0] = c2 * kx * ky - cw * t.hxy;
  out.h[1][1] = c2 * ky * ky - cw * t.hyy;
  out.h[0][2] = out.h[2][0] = c2 * kx;
  out.h[1][2] = out.h[2][1] = c2 * ky;
  out.h[2][2] = c2;
  return true;
}

// Smoothed action plus log-barrier keeping the interior knot densities
// positive (the un-barriered problem is a relaxation: negative intermediate
// densities can lower the action on badly scaled instances).
double psi_eps(const Staggered& st, const Vec& U, double eps, double nu) {
  for (long i = 0; i < st.nrho; ++i)
    if (!(U[i] > 0.0)) return std::numeric_limits<double>::infinity();
  Vec V(st.ndual);
  st.forward(U, V);
  V += st.cvec;
  double a = 0.0;
  for (long l = 0; l < st.ncells; ++l) {
    const double X = V[3 * l] + eps, Y = V[3 * l + 1] + eps;
    if (!(X > 0.0) || !(Y > 0.0)) return std::numeric_limits<double>::infinity();
    const double w = V[3 * l + 2];
    a += st.dt * st.ew[static_cast<std::size_t>(l % st.E)] * w * w / detail::theta_value(X, Y);
  }
  for (long i = 0; i < st.nrho; ++i) a -= nu * std::log(U[i]);
  return a;
}

// One damped-Newton minimization of psi_eps over {A U = b}, warm started at a
// strictly feasible U.
void newton_stage(const Staggered& st, Vec& U, double eps, double nu, int max_iter) {
  const long n = st.nvar;
  const long m = st.A.rows();
  Vec V(st.ndual), g(n), rhs(n + m), sol;
  std::vector<Eigen::Triplet<double>> trip;
  // The undamped KKT system is nonsingular (the Hessian is positive definite
  // on the constraint null space once the barrier is in); damping only enters
  // as a fallback when the factorization or the line search fails.
  double lambda = 0.0;
  double prev = psi_eps(st, U, eps, nu);
  if (!std::isfinite(prev))
    throw ConvergenceError("oracle stage started outside the barrier domain");
  for (int it = 0; it < max_iter; ++it) {
    st.forward(U, V);
    V += st.cvec;
    g.setZero();
    trip.clear();
    for (long l = 0; l < st.ncells; ++l) {
      const int k = static_cast<int>(l / st.E);
      const long e = l % st.E;
      const auto& ed = st.edges[static_cast<std::size_t>(e)];
      CellEval ce;
      if (!cell_eval(V[3 * l], V[3 * l + 1], V[3 * l + 2], eps, ce))
        throw ConvergenceError("oracle iterate left the smoothed domain");
      const double C = st.dt * st.ew[static_cast<std::size_t>(e)];
      // incidence of the cell coordinates (x, y, w) on the variables
      std::array<std::pair<long, double>, 5> inc{};
      std::array<int, 5> which{};
      int ni = 0;
      if (k >= 1) {
        inc[ni] = {st.idx_rho(k, ed.from), 0.5};
        which[ni++] = 0;
        inc[ni] = {st.idx_rho(k, ed.to), 0.5};
        which[ni++] = 1;
      }
      if (k + 1 <= st.K - 1) {
        inc[ni] = {st.idx_rho(k + 1, ed.from), 0.5};
        which[ni++] = 0;
        inc[ni] = {st.idx_rho(k + 1, ed.to), 0.5};
        which[ni++] = 1;
      }
      inc[ni] = {st.idx_w(k, e), 1.0};
      which[ni++] = 2;
      for (int a = 0; a < ni; ++a) {
        g[inc[a].first] += C * ce.g[which[a]] * inc[a].second;
        for (int bq = 0; bq < ni; ++bq)
          trip.emplace_back(inc[a].first, inc[bq].first,
                            C * ce.h[which[a]][which[bq]] * inc[a].second * inc[bq].second);
      }
    }
    for (long i = 0; i < st.nrho; ++i) {
      g[i] -= nu / U[i];
      trip.emplace_back(i, i, nu / (U[i] * U[i]));
    }

    bool stepped = false;
    for (int attempt = 0; attempt < 8 && !stepped; ++attempt) {
      auto kkt_trip = trip;
      for (long i = 0; i < n; ++i) kkt_trip.emplace_back(i, i, lambda);
      for (int outer = 0; outer < st.A.outerSize(); ++outer)
        for (SpMat::InnerIterator itA(st.A, outer); itA; ++itA) {
          kkt_trip.emplace_back(n + itA.row(), itA.col(), itA.value());
          kkt_trip.emplace_back(itA.col(), n + itA.row(), itA.value());
        }
      SpMat kkt(n + m, n + m);
      kkt.setFromTriplets(kkt_trip.begin(), kkt_trip.end());
      // Symmetric equilibration tames the wide dynamic range of the entries
      // (tail-state curvatures can differ from head ones by many decades).
      Vec d = Vec::Ones(n + m);
      for (int outer = 0; outer < kkt.outerSize(); ++outer)
        for (SpMat::InnerIterator itK(kkt, outer); itK; ++itK)
          d[itK.row()] = std::max(d[itK.row()], std::abs(itK.value()));
      d = d.cwiseSqrt().cwiseInverse();
      const SpMat kkt_scaled = d.asDiagonal() * kkt * d.asDiagonal();
      Eigen::SparseLU<SpMat> lu;
      lu.compute(kkt_scaled);
      if (lu.info() != Eigen::Success) {
        lambda = (lambda == 0.0) ? 1e-10 : lambda * 30.0;
        continue;
      }
      rhs.setZero(n + m);
      rhs.head(n) = -g;
      sol = d.asDiagonal() * lu.solve(Vec(d.asDiagonal() * rhs));
      // one pass of iterative refinement recovers digits lost to conditioning
      Vec resid = rhs - kkt * sol;
      sol += d.asDiagonal() * lu.solve(Vec(d.asDiagonal() * resid));
      const Vec dU = sol.head(n);
      const double slope = g.dot(dU);
      // The Newton decrement estimates the remaining stage gap; a small
      // decrease alone is no stopping signal (boundary-capped steps can be
      // microscopic while the gap is still large).
      if (lambda == 0.0 && -0.5 * slope <= 1e-14 * (1.0 + std::abs(prev))) return;
      if (!(slope < 0.0)) {
        lambda = (lambda == 0.0) ? 1e-10 : lambda * 30.0;
        continue;
      }
      // fraction-to-boundary cap keeps the barrier argument positive
      double tmax = 1.0;
      for (long i = 0; i < st.nrho; ++i)
        if (dU[i] < 0.0) tmax = std::min(tmax, -0.995 * U[i] / dU[i]);
      double t = tmax;
      for (int ls = 0; ls < 40; ++ls) {
        const Vec Un = U + t * dU;
        const double fn = psi_eps(st, Un, eps, nu);
        if (std::isfinite(fn) && fn <= prev + 1e-4 * t * slope) {
          U = Un;
          prev = fn;
          stepped = true;
          lambda = (lambda <= 1e-12) ? 0.0 : lambda * 0.3;
          break;
        }
        t *= 0.5;
      }
      if (!stepped) lambda = (lambda == 0.0) ? 1e-10 : lambda * 30.0;
    }
    if (!stepped) return;  // no further progress possible at any damping
  }
}

// Builds exactly feasible iterates with strictly positive interior knots: the
// knot densities are prescribed and the slab velocities solved in closed form
// (per-slab minimum-norm solution of the continuity rows, last row dropped;
// it holds automatically since every knot has unit mass).
struct FeasibleBuilder {
  const Staggered& st;
  SpMat Dr;
  Eigen::SimplicialLDLT<SpMat> fact;

  explicit FeasibleBuilder(const Staggered& s) : st(s) {
    const long Sr = st.S - 1;
    std::vector<Eigen::Triplet<double>> trip;
    for (long e = 0; e < st.E; ++e) {
      const auto& ed = st.edges[static_cast<std::size_t>(e)];
      if (ed.to < Sr)
        trip.emplace_back(ed.to, e, -st.dt * st.ew[static_cast<std::size_t>(e)] /
                                        st.pi[static_cast<std::size_t>(ed.to)]);
      if (ed.from < Sr)
        trip.emplace_back(ed.from, e, st.dt * st.vol[static_cast<std::size_t>(ed.site)]);
    }
    Dr.resize(Sr, st.E);
    Dr.setFromTriplets(trip.begin(), trip.end());
    fact.compute(SpMat(Dr * Dr.transpose()));
    if (fact.info() != Eigen::Success)
      throw ConvergenceError("slab continuity system could not be factorized");
  }

  // knots: K+1 density rows, row 0 = rho0 and row K = rho1, all of unit mass.
  Vec assemble(const std::vector<Vec>& knots) const {
    Vec U = Vec::Zero(st.nvar);
    for (int k = 1; k <= st.K - 1; ++k)
      for (Index nn = 0; nn < st.S; ++nn) U[st.idx_rho(k, nn)] = knots[static_cast<std::size_t>(k)][nn];
    for (int k = 0; k < st.K; ++k) {
      const Vec diff = knots[static_cast<std::size_t>(k) + 1] - knots[static_cast<std::size_t>(k)];
      const Vec w = Dr.transpose() * fact.solve(-diff.head(st.S - 1));
      for (long e = 0; e < st.E; ++e) U[st.idx_w(k, e)] = w[e];
    }
    return U;
  }
};

std::vector<Vec> blended_knots(const Staggered& st, double beta) {
  std::vector<Vec> knots(static_cast<std::size_t>(st.K) + 1);
  knots[0] = Eigen::Map<const Vec>(st.rho0.data(), st.S);
  knots[static_cast<std::size_t>(st.K)] = Eigen::Map<const Vec>(st.rho1.data(), st.S);
  for (int k = 1; k <= st.K - 1; ++k) {
    const double t = static_cast<double>(k) / st.K;
    knots[static_cast<std::size_t>(k)] =
        (1.0 - beta) * ((1.0 - t) * knots[0] + t * knots[static_cast<std::size_t>(st.K)]) +
        beta * Vec::Ones(st.S);  // the reference density, always unit mass
  }
  return knots;
}

double solve_from(const Staggered& st, Vec U) {
  constexpr double eps_sched[] = {1e-4, 1e-6, 1e-8, 1e-10, 1e-12, 1e-12};
  constexpr double nu_sched[] = {1e-4, 1e-6, 1e-8, 1e-10, 1e-12, 1e-14};
  for (int s = 0; s < 6; ++s) newton_stage(st, U, eps_sched[s], nu_sched[s], 200);
  const double value = st.exact_action(U);
  if (!std::isfinite(value))
    throw ConvergenceError("oracle minimization produced an infeasible action");
  return value;
}

std::vector<Vec> perturbed_knots(const Staggered& st, const std::vector<Vec>& base,
                                 std::uint64_t seed) {
  std::uint64_t s = seed * 0x9E3779B97F4A7C15ull + 1;
  auto uniform = [&]() {
    s ^= s << 13;
    s ^= s >> 7;
    s ^= s << 17;
    return static_cast<double>(s >> 11) * 0x1p-52 - 1.0;  // [-1, 1)
  };
  std::vector<Vec> knots = base;
  for (int k = 1; k <= st.K - 1; ++k) {
    Vec& row = knots[static_cast<std::size_t>(k)];
    double mass = 0.0;
    for (Index nn = 0; nn < st.S; ++nn) {
      row[nn] *= 1.0 + 0.25 * uniform();
      mass += row[nn] * st.pi[static_cast<std::size_t>(nn)];
    }
    row /= mass;
  }
  return knots;
}

}  // namespace

double brute_force_w0(const TransportProblem& problem) {
  problem.validate();
  const long S = problem.space->size();
  if (S * problem.intervals > 5000)
    throw SizingError("oracle instances must satisfy S * K <= 5000");

  Staggered st(problem.space, problem.P0.rho, problem.P1.rho, problem.intervals);
  if (st.E == 0) return 0.0;

  FeasibleBuilder fb(st);
  const auto base = blended_knots(st, 1e-3);
  const double v0 = solve_from(st, fb.assemble(base));
  const double v1 = solve_from(st, fb.assemble(perturbed_knots(st, base, 0xA5)));
  const double v2 = solve_from(st, fb.assemble(perturbed_knots(st, base, 0x5A)));
  const double vmin = std::min({v0, v1, v2});
  const double vmax = std::max({v0, v1, v2});
  if (vmax - vmin > 1e-8 * std::max(1.0, vmin)) {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "oracle restarts disagree beyond tolerance: %.12e %.12e %.12e", v0, v1, v2);
    throw ConvergenceError(buf);
  }
  return vmin;
}

}  // namespace nlbb
