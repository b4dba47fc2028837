#pragma once

// Internal machinery shared by the primal-dual solver and the brute-force
// oracle: the staggered time discretization of the action, the linear
// continuity-equation system with its projection, and the proximal map of the
// per-edge mobility term. Not installed.

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "nlbb/configspace.hpp"
#include "nlbb/mobility.hpp"
#include "nlbb/path.hpp"

namespace nlbb::detail {

using SpMat = Eigen::SparseMatrix<double>;
using Vec = Eigen::VectorXd;

// Logarithmic mean theta(X, Y) with first and second derivatives, for
// X, Y > 0. Series branch keeps full accuracy near the diagonal.
struct ThetaEval {
  double value, gx, gy, hxx, hxy, hyy;
};

inline ThetaEval theta_eval(double X, double Y) {
  const double u = X / Y;
  const double d = u - 1.0;
  double phi, dphi, ddphi;
  if (std::abs(d) < 1e-4) {
    phi = 1.0 + d * (0.5 + d * (-1.0 / 12 + d * (1.0 / 24 + d * (-19.0 / 720))));
    dphi = 0.5 + d * (-1.0 / 6 + d * (0.125 + d * (-19.0 / 180 + d * (3.0 / 32))));
    ddphi = -1.0 / 6 + d * (0.25 + d * (-19.0 / 60 + d * 0.375));
  } else {
    const double L = std::log(u);
    const double iu = 1.0 / u;
    phi = d / L;
    dphi = (L - 1.0 + iu) / (L * L);
    ddphi = ((1.0 - iu) * L - 2.0 * (L - 1.0 + iu)) * iu / (L * L * L);
  }
  ThetaEval t;
  t.value = Y * phi;
  t.gx = dphi;
  t.gy = phi - u * dphi;
  const double s = ddphi / Y;
  t.hxx = s;
  t.hxy = -u * s;
  t.hyy = u * u * s;
  return t;
}

inline double theta_value(double X, double Y) {
  const double u = X / Y;
  const double d = u - 1.0;
  if (std::abs(d) < 1e-4)
    return Y * (1.0 + d * (0.5 + d * (-1.0 / 12 + d * (1.0 / 24 + d * (-19.0 / 720)))));
  return Y * d / std::log(u);
}

struct Prox3 {
  double x, y, w;
};

// Proximal map of mu * w^2 / theta(x + eps, y + eps) over x, y >= 0, w free:
//   argmin 1/2 |(x,y,w) - (hx,hy,hw)|^2 + mu * alpha_eps(x, y, w).
// w is eliminated in closed form; the reduced objective in (x, y) is smooth
// and strongly convex on the box, solved by a projected Newton iteration
// (scalar when a bound is active) with Armijo backtracking.
inline Prox3 mobility_prox(double hx, double hy, double hw, double mu, double eps) {
  if (hw == 0.0) return {std::max(hx, 0.0), std::max(hy, 0.0), 0.0};
  const double HX = hx + eps, HY = hy + eps;
  const double c = mu * hw * hw;
  auto reduced = [&](double X, double Y) {
    return 0.5 * (X - HX) * (X - HX) + 0.5 * (Y - HY) * (Y - HY) +
           c / (theta_value(X, Y) + 2.0 * mu);
  };
  double X = std::max(HX, eps), Y = std::max(HY, eps);
  const double scale = std::max({1.0, std::abs(HX), std::abs(HY), std::abs(hw)});
  const double gtol = 1e-14 * scale;
  for (int it = 0; it < 200; ++it) {
    const ThetaEval t = theta_eval(X, Y);
    const double r = 1.0 / (t.value + 2.0 * mu);
    const double hp = -c * r * r;
    const double hpp = 2.0 * c * r * r * r;
    const double gX = (X - HX) + hp * t.gx;
    const double gY = (Y - HY) + hp * t.gy;
    const bool ax = (X <= eps && gX > 0.0);
    const bool ay = (Y <= eps && gY > 0.0);
    const double res = std::max(ax ? 0.0 : std::abs(gX), ay ? 0.0 : std::abs(gY));
    if (res <= gtol) break;
    double dX = 0.0, dY = 0.0;
    if (ax) {
      const double hYY = 1.0 + hpp * t.gy * t.gy + hp * t.hyy;
      dY = -gY / hYY;
    } else if (ay) {
      const double hXX = 1.0 + hpp * t.gx * t.gx + hp * t.hxx;
      dX = -gX / hXX;
    } else {
      const double a11 = 1.0 + hpp * t.gx * t.gx + hp * t.hxx;
      const double a12 = hpp * t.gx * t.gy + hp * t.hxy;
      const double a22 = 1.0 + hpp * t.gy * t.gy + hp * t.hyy;
      const double det = a11 * a22 - a12 * a12;
      dX = -(a22 * gX - a12 * gY) / det;
      dY = -(a11 * gY - a12 * gX) / det;
    }
    const double f0 = 0.5 * (X - HX) * (X - HX) + 0.5 * (Y - HY) * (Y - HY) + c * r;
    bool moved = false;
    for (int pass = 0; pass < 2 && !moved; ++pass) {
      // second pass falls back to the projected gradient direction
      if (pass == 1) {
        dX = ax ? 0.0 : -gX;
        dY = ay ? 0.0 : -gY;
      }
      double step = 1.0;
      for (int ls = 0; ls < 50; ++ls) {
        const double Xn = std::max(eps, X + step * dX);
        const double Yn = std::max(eps, Y + step * dY);
        if (Xn == X && Yn == Y) break;
        const double fn = reduced(Xn, Yn);
        const double decr = gX * (Xn - X) + gY * (Yn - Y);
        if (decr < 0.0 && fn <= f0 + 1e-4 * decr) {
          X = Xn;
          Y = Yn;
          moved = true;
          break;
        }
        step *= 0.5;
      }
    }
    if (!moved) break;  // numerically stationary
  }
  const double th = theta_value(X, Y);
  return {X - eps, Y - eps, hw * th / (th + 2.0 * mu)};
}

// Staggered discretization of the transport problem: densities on knots,
// velocities on interval midpoints, one objective cell per (interval, edge).
//
// Variable vector U = [rho_1 .. rho_{K-1} | w_0 .. w_{K-1}] with rho_k in
// R^S (interior knots only; endpoints are data) and w_k in R^E over the edge
// list. The linearized cell map L sends U to per-cell triples (x, y, w) with
// x, y the knot-averaged densities at the edge tail/head, plus an identity
// copy of the interior densities used for their nonnegativity constraint.
struct Staggered {
  SpacePtr space;
  int K = 0;
  Index S = 0, E = 0;
  double dt = 0.0;
  std::vector<ConfigSpace::Edge> edges;
  std::vector<double> pi, vol, ew;  // ew[e] = pi(from) * vol(site)
  std::vector<double> rho0, rho1;
  long nrho = 0, nw = 0, nvar = 0, ncells = 0, ndual = 0;
  SpMat A;   // continuity rows (one dropped), row-scaled by 1/pi
  SpMat At;  // cached transpose
  Vec b;
  Eigen::SimplicialLDLT<SpMat> fact;  // of A A^T
  Vec cvec;                           // constant part of the cell map

  long idx_rho(int k, Index n) const { return static_cast<long>(k - 1) * S + n; }
  long idx_w(int k, long e) const { return nrho + static_cast<long>(k) * E + e; }

  Staggered(SpacePtr sp, const std::vector<double>& r0, const std::vector<double>& r1, int Kin)
      : space(std::move(sp)), K(Kin), rho0(r0), rho1(r1) {
    S = space->size();
    edges = space->edges();
    E = static_cast<Index>(edges.size());
    dt = 1.0 / K;
    pi = space->reference_weights();
    vol = space->site_volumes();
    ew.resize(edges.size());
    for (std::size_t e = 0; e < edges.size(); ++e)
      ew[e] = pi[static_cast<std::size_t>(edges[e].from)] * vol[static_cast<std::size_t>(edges[e].site)];
    nrho = static_cast<long>(K - 1) * S;
    nw = static_cast<long>(K) * E;
    nvar = nrho + nw;
    ncells = static_cast<long>(K) * E;
    ndual = 3 * ncells + nrho;

    // Continuity rows (k, n): (rho_{k+1} - rho_k)(n) - (dt / pi(n)) * div = rhs,
    // last row dropped (the row sums are linearly dependent).
    const long nrows = static_cast<long>(K) * S - 1;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(nrows) * 4);
    b = Vec::Zero(nrows);
    auto row_of = [&](int k, Index n) { return static_cast<long>(k) * S + n; };
    for (int k = 0; k < K; ++k) {
      for (Index n = 0; n < S; ++n) {
        const long r = row_of(k, n);
        if (r >= nrows) continue;
        if (k + 1 <= K - 1)
          trip.emplace_back(r, idx_rho(k + 1, n), 1.0);
        else
          b[r] -= rho1[static_cast<std::size_t>(n)];
        if (k >= 1)
          trip.emplace_back(r, idx_rho(k, n), -1.0);
        else
          b[r] += rho0[static_cast<std::size_t>(n)];
      }
      for (long e = 0; e < E; ++e) {
        const auto& ed = edges[static_cast<std::size_t>(e)];
        const long rt = row_of(k, ed.to);
        const long rf = row_of(k, ed.from);
        // influx at the head, outflux at the tail
        if (rt < nrows)
          trip.emplace_back(rt, idx_w(k, e), -dt * ew[static_cast<std::size_t>(e)] /
                                                 pi[static_cast<std::size_t>(ed.to)]);
        if (rf < nrows)
          trip.emplace_back(rf, idx_w(k, e), dt * vol[static_cast<std::size_t>(ed.site)]);
      }
    }
    A.resize(nrows, nvar);
    A.setFromTriplets(trip.begin(), trip.end());
    A.makeCompressed();
    At = A.transpose();
    SpMat M = A * At;
    fact.compute(M);
    if (fact.info() != Eigen::Success)
      throw ConvergenceError("continuity-equation system could not be factorized");

    // Constant part of the cell map (fixed endpoint halves).
    cvec = Vec::Zero(ndual);
    for (long e = 0; e < E; ++e) {
      const auto& ed = edges[static_cast<std::size_t>(e)];
      const long c0 = 3 * (static_cast<long>(0) * E + e);
      cvec[c0 + 0] += 0.5 * rho0[static_cast<std::size_t>(ed.from)];
      cvec[c0 + 1] += 0.5 * rho0[static_cast<std::size_t>(ed.to)];
      const long c1 = 3 * (static_cast<long>(K - 1) * E + e);
      cvec[c1 + 0] += 0.5 * rho1[static_cast<std::size_t>(ed.from)];
      cvec[c1 + 1] += 0.5 * rho1[static_cast<std::size_t>(ed.to)];
    }
  }

  // V = L U (linear part only; add cvec for the affine cell values).
  void forward(const Vec& U, Vec& V) const {
    V.setZero(ndual);
    for (int k = 0; k < K; ++k) {
      for (long e = 0; e < E; ++e) {
        const auto& ed = edges[static_cast<std::size_t>(e)];
        const long base = 3 * (static_cast<long>(k) * E + e);
        double x = 0.0, y = 0.0;
        if (k >= 1) {
          x += 0.5 * U[idx_rho(k, ed.from)];
          y += 0.5 * U[idx_rho(k, ed.to)];
        }
        if (k + 1 <= K - 1) {
          x += 0.5 * U[idx_rho(k + 1, ed.from)];
          y += 0.5 * U[idx_rho(k + 1, ed.to)];
        }
        V[base + 0] = x;
        V[base + 1] = y;
        V[base + 2] = U[idx_w(k, e)];
      }
    }
    V.tail(nrho) = U.head(nrho);
  }

  // U += L^T z.
  void add_adjoint(const Vec& z, Vec& U) const {
    for (int k = 0; k < K; ++k) {
      for (long e = 0; e < E; ++e) {
        const auto& ed = edges[static_cast<std::size_t>(e)];
        const long base = 3 * (static_cast<long>(k) * E + e);
        const double zx = z[base + 0], zy = z[base + 1];
        if (k >= 1) {
          U[idx_rho(k, ed.from)] += 0.5 * zx;
          U[idx_rho(k, ed.to)] += 0.5 * zy;
        }
        if (k + 1 <= K - 1) {
          U[idx_rho(k + 1, ed.from)] += 0.5 * zx;
          U[idx_rho(k + 1, ed.to)] += 0.5 * zy;
        }
        U[idx_w(k, e)] += z[base + 2];
      }
    }
    U.head(nrho) += z.tail(nrho);
  }

  // Euclidean projection onto {A U = b}.
  void project(Vec& U) const {
    Vec r = A * U - b;
    U -= At * fact.solve(r);
  }

  double op_norm() const {
    Vec v = Vec::Ones(nvar), V(ndual), u(nvar);
    double lam = 1.0;
    for (int it = 0; it < 60; ++it) {
      forward(v, V);
      u.setZero();
      add_adjoint(V, u);
      lam = u.norm();
      if (lam <= 0.0) return 1.0;
      v = u / lam;
    }
    return std::sqrt(lam);
  }

  // Exact-mobility action of a feasible iterate (tiny transient negatives in
  // the knot averages are clamped; +infinity propagates from dead edges that
  // still carry flux).
  double exact_action(const Vec& U) const {
    Vec V(ndual);
    forward(U, V);
    V += cvec;
    double a = 0.0;
    for (long l = 0; l < ncells; ++l) {
      const double x = std::max(V[3 * l + 0], 0.0);
      const double y = std::max(V[3 * l + 1], 0.0);
      const double w = V[3 * l + 2];
      const double al = mobility_alpha(x, y, w);
      if (!std::isfinite(al)) return std::numeric_limits<double>::infinity();
      a += dt * ew[static_cast<std::size_t>(l % E)] * al;
    }
    return a;
  }

  // First-order criticality of a feasible iterate: the infinity norm of the
  // exact-action gradient projected onto the constraint nullspace, with
  // components that press into an active nonnegativity bound removed. Zero at
  // a constrained minimizer; infinity when a dead cell still carries flux.
  double optimality_residual(const Vec& U) const {
    if (ncells == 0) return 0.0;
    Vec V(ndual);
    forward(U, V);
    V += cvec;
    Vec ghat = Vec::Zero(ndual);
    for (long l = 0; l < ncells; ++l) {
      const double x = V[3 * l + 0];
      const double y = V[3 * l + 1];
      const double w = V[3 * l + 2];
      const double m = dt * ew[static_cast<std::size_t>(l % E)];
      if (w == 0.0) continue;
      if (x <= 0.0 || y <= 0.0) return std::numeric_limits<double>::infinity();
      const ThetaEval t = theta_eval(x, y);
      const double it2 = 1.0 / (t.value * t.value);
      ghat[3 * l + 0] = -m * w * w * it2 * t.gx;
      ghat[3 * l + 1] = -m * w * w * it2 * t.gy;
      ghat[3 * l + 2] = m * 2.0 * w / t.value;
    }
    Vec g = Vec::Zero(nvar);
    add_adjoint(ghat, g);
    g -= At * fact.solve(A * g);  // component in the constraint nullspace
    double res = 0.0;
    for (long i = 0; i < nvar; ++i) {
      if (i < nrho && U[i] <= 1e-10 && g[i] > 0.0) continue;  // active bound
      res = std::max(res, std::abs(g[i]));
    }
    return res;
  }

  Vec feasible_init() const {
    Vec U = Vec::Zero(nvar);
    for (int k = 1; k <= K - 1; ++k) {
      const double t = static_cast<double>(k) / K;
      for (Index n = 0; n < S; ++n)
        U[idx_rho(k, n)] = (1.0 - t) * rho0[static_cast<std::size_t>(n)] +
                           t * rho1[static_cast<std::size_t>(n)];
    }
    project(U);
    return U;
  }

  // Feasible iterate seeded from an explicit continuity-equation path with the
  // matching knot layout (densities at the K+1 uniform knots, velocities at
  // interval midpoints), projected onto the discrete constraint set.
  Vec init_from_path(const CEPath& path) const {
    Vec U = Vec::Zero(nvar);
    for (int k = 1; k <= K - 1; ++k)
      for (Index n = 0; n < S; ++n)
        U[idx_rho(k, n)] = path.densities[static_cast<std::size_t>(k)].rho[static_cast<std::size_t>(n)];
    for (int k = 0; k < K; ++k)
      for (long e = 0; e < E; ++e) {
        const auto& ed = edges[static_cast<std::size_t>(e)];
        U[idx_w(k, e)] = path.velocities[static_cast<std::size_t>(k)].at(ed.from, ed.site);
      }
    project(U);
    return U;
  }

  CEPath extract_path(const Vec& U) const {
    CEPath path;
    path.space = space;
    path.knots = uniform_knots(K);
    path.densities.reserve(static_cast<std::size_t>(K) + 1);
    path.densities.push_back(DensityMeasure{space, rho0});
    for (int k = 1; k <= K - 1; ++k) {
      std::vector<double> rho(static_cast<std::size_t>(S));
      double mass = 0.0;
      for (Index n = 0; n < S; ++n) {
        rho[static_cast<std::size_t>(n)] = std::max(U[idx_rho(k, n)], 0.0);
        mass += rho[static_cast<std::size_t>(n)] * pi[static_cast<std::size_t>(n)];
      }
      // Clamping negative excursions adds mass; renormalize so the knot stays
      // a probability density (the reported continuity residual reflects it).
      if (mass > 0.0)
        for (Index n = 0; n < S; ++n) rho[static_cast<std::size_t>(n)] /= mass;
      path.densities.push_back(DensityMeasure{space, std::move(rho)});
    }
    path.densities.push_back(DensityMeasure{space, rho1});
    path.velocities.reserve(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
      VelocityDensity vd = zero_velocity(space);
      for (long e = 0; e < E; ++e)
        vd.at(edges[static_cast<std::size_t>(e)].from, edges[static_cast<std::size_t>(e)].site) =
            U[idx_w(k, e)];
      path.velocities.push_back(std::move(vd));
    }
    return path;
  }
};

}  // namespace nlbb::detail
