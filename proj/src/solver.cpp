#include "nlbb/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include "nlbb/dynamics.hpp"
#include "nlbb/mobility.hpp"
#include "transport_core.hpp"

namespace nlbb {

using detail::Staggered;
using detail::Vec;

void SolverConfig::validate() const {
  if (max_iters < 1) throw ConfigError("max_iters must be positive");
  if (!(eps0 > 0)) throw ConfigError("smoothing eps0 must be positive");
  if (!(ce_tol > 0) || !(action_tol > 0) || !(stage_tol > 0))
    throw ConfigError("solver tolerances must be positive");
  if (stall_window < 1) throw ConfigError("stall window must be positive");
  if (max_stages < 1) throw ConfigError("need at least one smoothing stage");
  if (!(step_ratio > 0)) throw ConfigError("step ratio must be positive");
  if (!auto_scale && (!(tau > 0) || !(sigma > 0)))
    throw ConfigError("explicit step sizes must be positive");
}

void TransportProblem::validate() const {
  if (!space) throw ConfigError("transport problem has no space");
  if (intervals < 1) throw ConfigError("need at least one time interval");
  config.validate();
  if (!P0.space || !P1.space) throw ConfigError("marginal without a space");
  if (P0.space.get() != space.get() && !compatible(*P0.space, *space))
    throw ConfigError("P0 lives on a different space");
  if (P1.space.get() != space.get() && !compatible(*P1.space, *space))
    throw ConfigError("P1 lives on a different space");
  if (!P0.valid(1e-8) || !P1.valid(1e-8))
    throw ConfigError("marginals must be probability densities");
}

namespace {

constexpr double kRelax = 1.9;  // over-relaxation factor of the primal-dual iteration
constexpr long kMaxVariables = 50'000'000;

double ceiling_mass(const DensityMeasure& P) {
  const auto& sp = *P.space;
  double m = 0.0;
  for (Index i = 0; i < sp.size(); ++i)
    if (sp.total(i) == sp.n_max()) m += P.prob(i);
  return m;
}

void add_ceiling_warnings(const TransportProblem& problem, std::vector<std::string>& warnings) {
  const double c0 = ceiling_mass(problem.P0);
  const double c1 = ceiling_mass(problem.P1);
  if (c0 > 1e-8 || c1 > 1e-8)
    warnings.push_back(
        "marginal mass at the occupancy ceiling exceeds 1e-8; truncation may bind");
}

}  // namespace

TransportSolution solve_w0(const TransportProblem& problem) {
  problem.validate();
  const auto& sp = *problem.space;
  const long S = sp.size();
  const int K = problem.intervals;
  if (static_cast<long>(K) * S * (1 + sp.sites()) > kMaxVariables)
    throw SizingError("transport problem exceeds the variable budget");

  TransportSolution sol;
  sol.diagnostics.smoothing = problem.config.eps0;
  add_ceiling_warnings(problem, sol.diagnostics.warnings);

  Staggered st(problem.space, problem.P0.rho, problem.P1.rho, K);

  // Degenerate spaces carry no transport: the only path is constant.
  if (st.E == 0) {
    Vec U = Vec::Zero(st.nvar);
    if (st.nvar > 0) U = st.feasible_init();
    sol.path = st.extract_path(U);
    sol.action_value = action(sol.path);
    sol.diagnostics.converged = true;
    sol.diagnostics.ce_residual = ce_residual(sol.path);
    return sol;
  }

  const SolverConfig& cfg = problem.config;
  const double L = st.op_norm();
  double tau, sigma;
  if (cfg.auto_scale) {
    tau = 0.95 * cfg.step_ratio / L;
    sigma = 0.95 / (cfg.step_ratio * L);
  } else {
    tau = cfg.tau;
    sigma = cfg.sigma;
  }

  // Seed from the thinning interpolation when it evaluates to a finite action:
  // it is an explicit continuity-equation solution that is usually close to
  // optimal, which matters on poorly scaled instances (masses spanning many
  // decades). Fall back to the projected linear interpolation otherwise.
  Vec U = st.feasible_init();
  double init_action = st.exact_action(U);
  try {
    CEPath seed = sample_thinning_path(problem.P0, problem.P1, K);
    Vec Ut = st.init_from_path(seed);
    const double at = st.exact_action(Ut);
    if (at < init_action) {
      U = std::move(Ut);
      init_action = at;
    }
  } catch (const std::runtime_error&) {
    // interpolation unavailable (e.g. clipping); keep the linear seed
  }
  Vec z = Vec::Zero(st.ndual);
  Vec Ubar = U, zeta(st.ndual), znew(st.ndual), grad(st.nvar), Unew(st.nvar);

  double eps = cfg.eps0;
  double prev_stage = std::numeric_limits<double>::quiet_NaN();
  double best_action = init_action;
  Vec best_U = U;
  long total_iters = 0;
  bool converged = false;

  for (int stage = 0; stage < cfg.max_stages; ++stage) {
    const long W = cfg.stall_window;
    std::vector<double> ring(static_cast<std::size_t>(W) + 1,
                             std::numeric_limits<double>::infinity());
    bool stalled = false;
    for (long it = 1; it <= cfg.max_iters; ++it) {
      ++total_iters;
      // primal update with the current dual: gradient step, then exact
      // continuity projection
      grad.setZero();
      st.add_adjoint(z, grad);
      Unew = U - tau * grad;
      st.project(Unew);
      // dual update at the extrapolated primal: mobility cells via the Moreau
      // identity, then the nonnegativity copies of the interior densities
      Ubar = 2.0 * Unew - U;
      st.forward(Ubar, zeta);
      zeta += st.cvec;
      zeta = z + sigma * zeta;
      for (long l = 0; l < st.ncells; ++l) {
        const double mu = st.dt * st.ew[static_cast<std::size_t>(l % st.E)] / sigma;
        const auto p = detail::mobility_prox(zeta[3 * l] / sigma, zeta[3 * l + 1] / sigma,
                                             zeta[3 * l + 2] / sigma, mu, eps);
        znew[3 * l] = zeta[3 * l] - sigma * p.x;
        znew[3 * l + 1] = zeta[3 * l + 1] - sigma * p.y;
        znew[3 * l + 2] = zeta[3 * l + 2] - sigma * p.w;
      }
      for (long i = 3 * st.ncells; i < st.ndual; ++i) znew[i] = std::min(zeta[i], 0.0);
      // over-relaxation accelerates the fixed-point iteration
      U += kRelax * (Unew - U);
      z += kRelax * (znew - z);

      const double a = st.exact_action(U);
      if (a < best_action) {
        best_action = a;
        best_U = U;
      }
      ring[static_cast<std::size_t>(it % (W + 1))] = best_action;
      if (it % W == 0) sol.diagnostics.action_history.push_back(best_action);
      if (it > W) {
        const double old = ring[static_cast<std::size_t>((it - W) % (W + 1))];
        if (std::isfinite(old) && std::isfinite(best_action) &&
            old - best_action <= cfg.action_tol * std::max(1.0, std::abs(best_action))) {
          stalled = true;
          break;
        }
      }
    }
    sol.diagnostics.smoothing = eps;
    if (!stalled) {
      sol.diagnostics.warnings.push_back("iteration budget exhausted before the action stalled");
      break;
    }
    if (std::isfinite(prev_stage) &&
        std::abs(best_action - prev_stage) <= cfg.stage_tol * std::max(1.0, std::abs(best_action))) {
      converged = true;
      break;
    }
    prev_stage = best_action;
    eps *= 0.5;
  }

  sol.path = st.extract_path(best_U);
  sol.action_value = action(sol.path);
  sol.diagnostics.iterations = total_iters;
  sol.diagnostics.ce_residual = ce_residual(sol.path);
  // A stalled action is not by itself proof of optimality: on degenerate
  // instances (optimal density touching zero) the iteration can freeze mid
  // valley. Require the projected-gradient criticality measure to be small
  // before reporting success.
  sol.diagnostics.optimality_residual =
      st.optimality_residual(best_U) / (1.0 + std::abs(best_action));
  if (converged && sol.diagnostics.optimality_residual > cfg.opt_tol) {
    converged = false;
    sol.diagnostics.warnings.push_back(
        "action stalled away from first-order optimality; result may be inaccurate");
  }
  sol.diagnostics.converged = converged && sol.diagnostics.ce_residual <= cfg.ce_tol;
  return sol;
}

CEPath geodesic(const TransportProblem& problem) {
  TransportSolution sol = solve_w0(problem);
  if (!sol.diagnostics.converged)
    throw ConvergenceError("transport solve did not converge; no geodesic available");
  return std::move(sol.path);
}

double w0_upper_bound_thinning(const DensityMeasure& P0, const DensityMeasure& P1,
                               int intervals) {
  const CEPath path = sample_thinning_path(P0, P1, intervals);
  return action(path);
}

std::vector<RefinementRow> refinement_table(TransportProblem problem, const std::vector<int>& Ks) {
  std::vector<RefinementRow> rows;
  rows.reserve(Ks.size());
  for (int K : Ks) {
    problem.intervals = K;
    const TransportSolution sol = solve_w0(problem);
    rows.push_back({K, sol.action_value});
  }
  return rows;
}

double richardson_extrapolate(const std::vector<RefinementRow>& rows) {
  if (rows.size() < 2) throw ConfigError("refinement table needs at least two rows");
  const auto& a = rows[rows.size() - 2];
  const auto& b = rows[rows.size() - 1];
  if (a.intervals <= 0 || b.intervals <= a.intervals)
    throw ConfigError("refinement table must increase in resolution");
  const double q = static_cast<double>(b.intervals) / a.intervals;
  return b.action + (b.action - a.action) / (q * q - 1.0);
}

}  // namespace nlbb
