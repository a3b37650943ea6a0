#pragma once

#include <vector>

#include "cfbss/lift.hpp"

namespace cfbss {

/// Knobs for the proximal-gradient reference solvers.
struct SolverConfig {
  double alpha = 0.01;       // group-l21 regularization weight (coarse objective)
  double lambda = 0.01;      // weighted-l21 regularization weight (fine objective)
  double omega_fixed = 0.5;  // threshold weight on previous-support groups
  int max_iters = 2000;
  double tol = 1e-6;         // relative iterate-change stopping threshold
  double step = 0.0;         // <= 0 selects 1/sigma_max^2(phi) automatically

  void validate() const;  // alpha, lambda > 0; tol > 0; max_iters >= 1; omega_fixed >= 0
};

/// Exact proximal operator of tau * sum_j ||group_j||_2 over paired-row
/// groups: each group scales by max(1 - tau / n_j, 0).
LiftedMatrix prox_group_l21(const LiftedMatrix& v, double tau);

/// Weighted variant with per-group shrinkage tau[j].
LiftedMatrix prox_weighted_group_l21(const LiftedMatrix& v, const std::vector<double>& tau);

struct IstaResult {
  LiftedMatrix estimate;
  int iterations = 0;
  bool converged = false;
  std::vector<double> objective_history;  // objective value after each iterate
};

/// Proximal gradient descent on
///   0.5 * ||phi*S - r||_F^2 + alpha * sum_j ||group_j(S)||_2
/// with step 1/sigma_max^2(phi): S <- prox(S + step * phi^T (r - phi S),
/// step * alpha). Stops on relative iterate change < tol; hitting max_iters
/// returns the last iterate with converged = false.
IstaResult ista_l21_solve(const LiftedMatrix& phi, const LiftedMatrix& r_bar,
                          const SolverConfig& cfg);

/// Same iteration with per-group thresholds step * lambda * w_j, where
/// w_j = omega_fixed for groups in prev_support and 1 elsewhere.
IstaResult ista_weighted_l21_solve(const LiftedMatrix& phi, const LiftedMatrix& z_bar,
                                   const std::vector<Eigen::Index>& prev_support,
                                   const SolverConfig& cfg);

struct OracleResult {
  LiftedMatrix estimate;
  bool rank_deficient = false;
};

/// Genie-aided least squares: solves the complex system restricted to the
/// true support rows (rank-revealing, so a deficient system falls back to the
/// minimum-norm solution with a flag) and zero-fills the rest.
OracleResult oracle_ls(const LiftedMatrix& phi, const LiftedMatrix& z_bar,
                       const std::vector<Eigen::Index>& true_support);

/// Largest per-group violation of the first-order optimality conditions of
/// the (weighted) group-l21 objective at `estimate`: active groups must have
/// gradient equal to -alpha*w_j times the group direction, inactive groups a
/// gradient norm at most alpha*w_j. Empty `weights` means all-ones.
double kkt_residual_l21(const LiftedMatrix& phi, const LiftedMatrix& r_bar,
                        const LiftedMatrix& estimate, double alpha,
                        const std::vector<double>& weights = {});

/// Log-spaced regularization grid {1e-3 .. 1e0}, 7 points, used to tune the
/// baselines on validation data.
std::vector<double> ista_alpha_grid();

}  // namespace cfbss
