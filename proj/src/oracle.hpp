#pragma once
#include <stdexcept>
#include <string>
#include <vector>

#include "env.hpp"

namespace miso::oracle {

struct OracleError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Normalized discounted state-action occupancy of a joint policy, from the
// linear flow equations (direct solve, no rollouts). Entries sum to 1.
std::vector<double> exact_occupancy(const env::TabularTeamMdp& mdp,
                                    const env::JointPolicy& pi);

// Worst-state violation of the flow balance for a candidate occupancy.
double flow_residual(const env::TabularTeamMdp& mdp, const std::vector<double>& rho);

// KL(rho || rho_e) + alpha * KL(rho || rho_u), +inf when rho puts mass where
// a reference has none. All three indexed [s * n_joint + ja].
double primal_objective(const std::vector<double>& rho,
                        const std::vector<double>& rho_e,
                        const std::vector<double>& rho_u, double alpha);

// Exact expected discounted return of a joint policy: sum over (s, ja) of
// occupancy times team reward, scaled back by 1/(1-gamma).
double exact_return(const env::TabularTeamMdp& mdp, const env::JointPolicy& pi);

struct DiceExactResult {
  std::vector<double> nu;    // optimal state potential
  std::vector<double> w;     // optimal density ratio per (s, ja)
  std::vector<double> rho;   // optimal occupancy = w * rho_u
  double dual_value = 0.0;   // negated minimum of the potential objective
  double primal_value = 0.0; // objective of the independent primal solve
  double gap = 0.0;          // |dual_value - primal_value|
  int newton_iters = 0;
  int primal_iters = 0;
};

// Exact solution of the regularized occupancy-matching problem two ways.
// Dual: damped Newton on the state potential, run to gradient norm < tol;
// the stationary point makes w = exp(A/(1+alpha) - 1) flow-feasible.
// Primal: mirror descent over the flow polytope in policy coordinates,
// which never references the ratio closed form, so agreement of the two
// values certifies the derivation instead of restating it. Disagreement
// beyond 1e-6 is an error, not a result. Both references must be strictly
// positive everywhere; the objective then pins the optimum in the interior.
DiceExactResult solve_dice_exact(const env::TabularTeamMdp& mdp,
                                 const std::vector<double>& rho_e,
                                 const std::vector<double>& rho_u, double alpha,
                                 double tol = 1e-12);

}  // namespace miso::oracle
