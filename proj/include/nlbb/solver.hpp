#pragma once

#include <string>
#include <utility>
#include <vector>

#include "nlbb/configspace.hpp"
#include "nlbb/path.hpp"

namespace nlbb {

// Tuning knobs for the primal-dual transport solver.
struct SolverConfig {
  long max_iters = 60000;    // iteration cap per smoothing stage
  bool auto_scale = true;    // derive step sizes from the operator norm
  double tau = 0.0;          // primal step, used when auto_scale is off
  double sigma = 0.0;        // dual step, used when auto_scale is off
  double step_ratio = 16.0;  // primal/dual balance applied under auto_scale
  double eps0 = 1e-9;        // initial mobility smoothing
  double ce_tol = 1e-9;      // continuity-equation residual bound
  double action_tol = 1e-9;  // relative action stall threshold
  int stall_window = 100;    // iterations the action must stall over
  int max_stages = 8;        // smoothing halvings before giving up
  double stage_tol = 1e-8;   // exact-action agreement between stages
  double opt_tol = 1e-4;     // scaled first-order criticality bound for success

  void validate() const;  // ConfigError on nonpositive tolerances
};

struct TransportProblem {
  SpacePtr space;
  DensityMeasure P0, P1;
  int intervals = 32;  // uniform time grid 0 = t_0 < ... < t_K = 1
  SolverConfig config{};

  void validate() const;
};

struct SolveDiagnostics {
  long iterations = 0;
  double ce_residual = 0.0;
  bool converged = false;
  double smoothing = 0.0;               // final smoothing level used
  std::vector<double> action_history;   // exact action, one sample per stall window
  std::vector<std::string> warnings;    // e.g. marginal mass near the occupancy ceiling
};

struct TransportSolution {
  CEPath path;
  double action_value = 0.0;  // action(path) with the exact mobility
  SolveDiagnostics diagnostics;
};

// Squared transport distance W0^2(P0, P1) with the minimizing discrete path.
// Primal-dual scheme over (density, velocity) jointly on the staggered time
// grid; feasibility is maintained by exact projection onto the continuity
// equation, so returned paths satisfy it to ce_tol. Non-convergence returns
// the best iterate with diagnostics.converged = false.
TransportSolution solve_w0(const TransportProblem& problem);

// Independent high-accuracy optimum of the same discrete problem: an
// equality-constrained damped Newton method on the smoothed objective with
// smoothing continuation to 1e-12, validated by two perturbed restarts that
// must agree to 1e-8 (ConvergenceError otherwise). SizingError when
// S * K > 5000.
double brute_force_w0(const TransportProblem& problem);

// The minimizing path. Throws ConvergenceError unless solve_w0 converged.
CEPath geodesic(const TransportProblem& problem);

// Action of the sampled thinning interpolation between P0 and P1: the cost of
// an explicit near-feasible path, hence an upper bound for the optimum up to
// discretization error.
double w0_upper_bound_thinning(const DensityMeasure& P0, const DensityMeasure& P1,
                               int intervals);

struct RefinementRow {
  int intervals = 0;
  double action = 0.0;
};

// Re-solve the problem on each grid in Ks and tabulate the optimal actions.
std::vector<RefinementRow> refinement_table(TransportProblem problem,
                                            const std::vector<int>& Ks);

// Second-order Richardson estimate of the continuum value from the last two
// rows of a refinement table.
double richardson_extrapolate(const std::vector<RefinementRow>& rows);

}  // namespace nlbb
