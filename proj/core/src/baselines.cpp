#include "cfbss/baselines.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace cfbss {
namespace {

// 0.5 * ||phi S - r||_F^2 + sum_j tau_weight[j] * n_j with tau_weight[j] =
// alpha * w_j; `weights` empty means uniform.
double objective_l21(const Eigen::MatrixXd& phi, const Eigen::MatrixXd& r,
                     const Eigen::MatrixXd& s, double alpha, const std::vector<double>& weights) {
  const double fidelity = 0.5 * (phi * s - r).squaredNorm();
  const Eigen::VectorXd norms = group_row_norms(s);
  double penalty = 0.0;
  for (Eigen::Index j = 0; j < norms.size(); ++j) {
    const double w = weights.empty() ? 1.0 : weights[static_cast<std::size_t>(j)];
    penalty += alpha * w * norms(j);
  }
  return fidelity + penalty;
}

IstaResult ista_core(const LiftedMatrix& phi, const LiftedMatrix& target, double alpha,
                     const std::vector<double>& weights, const SolverConfig& cfg) {
  cfg.validate();
  if (phi.kind() != LiftKind::Operator || target.kind() != LiftKind::Signal ||
      phi.complex_rows() != target.complex_rows()) {
    throw std::invalid_argument("ista solver: phi/measurement shapes do not conform");
  }

  const Eigen::MatrixXd& a = phi.data();
  const Eigen::MatrixXd at = a.transpose();
  const Eigen::MatrixXd& r = target.data();
  const double step = cfg.step > 0.0 ? cfg.step : 1.0 / spectral_norm_sq(a);

  std::vector<double> tau(static_cast<std::size_t>(phi.complex_cols()));
  for (std::size_t j = 0; j < tau.size(); ++j) {
    tau[j] = step * alpha * (weights.empty() ? 1.0 : weights[j]);
  }

  IstaResult res;
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(2 * phi.complex_cols(), r.cols());
  res.objective_history.reserve(static_cast<std::size_t>(cfg.max_iters));
  [[maybe_unused]] double prev_objective = objective_l21(a, r, s, alpha, weights);

  for (int it = 0; it < cfg.max_iters; ++it) {
    const Eigen::MatrixXd grad_point = s + step * (at * (r - a * s));
    Eigen::MatrixXd next =
        prox_weighted_group_l21(LiftedMatrix::adopt_signal(grad_point), tau).data();

    const double objective = objective_l21(a, r, next, alpha, weights);
    // Proximal gradient with step <= 1/L is monotone; tolerate rounding only.
    assert(objective <= prev_objective + 1e-9 * (1.0 + std::abs(prev_objective)));
    prev_objective = objective;
    res.objective_history.push_back(objective);

    const double change = (next - s).norm();
    const double scale = std::max(s.norm(), 1e-12);
    s = std::move(next);
    res.iterations = it + 1;
    if (change / scale < cfg.tol) {
      res.converged = true;
      break;
    }
  }
  res.estimate = LiftedMatrix::adopt_signal(std::move(s));
  return res;
}

}  // namespace

void SolverConfig::validate() const {
  if (alpha <= 0.0 || lambda <= 0.0) {
    throw std::invalid_argument("SolverConfig: alpha and lambda must be positive");
  }
  if (tol <= 0.0) throw std::invalid_argument("SolverConfig: tol must be positive");
  if (max_iters < 1) throw std::invalid_argument("SolverConfig: max_iters must be >= 1");
  if (omega_fixed < 0.0) throw std::invalid_argument("SolverConfig: omega_fixed must be >= 0");
}

LiftedMatrix prox_group_l21(const LiftedMatrix& v, double tau) {
  if (tau < 0.0) throw std::invalid_argument("prox_group_l21: tau must be non-negative");
  return prox_weighted_group_l21(
      v, std::vector<double>(static_cast<std::size_t>(v.complex_rows()), tau));
}

LiftedMatrix prox_weighted_group_l21(const LiftedMatrix& v, const std::vector<double>& tau) {
  if (v.kind() != LiftKind::Signal) {
    throw std::invalid_argument("prox_weighted_group_l21: expected a signal lift");
  }
  if (static_cast<Eigen::Index>(tau.size()) != v.complex_rows()) {
    throw std::invalid_argument("prox_weighted_group_l21: one tau per group required");
  }
  const Eigen::Index m = v.complex_rows();
  const Eigen::VectorXd norms = group_row_norms(v.data());
  Eigen::MatrixXd out = v.data();
  for (Eigen::Index j = 0; j < m; ++j) {
    if (tau[static_cast<std::size_t>(j)] < 0.0) {
      throw std::invalid_argument("prox_weighted_group_l21: tau must be non-negative");
    }
    // Same expression as the shrinkage kernel so the two agree bitwise.
    const double t = tau[static_cast<std::size_t>(j)];
    const double scale = norms(j) > t ? (norms(j) - t) / norms(j) : 0.0;
    out.row(j) *= scale;
    out.row(m + j) *= scale;
  }
  return LiftedMatrix::adopt_signal(std::move(out));
}

IstaResult ista_l21_solve(const LiftedMatrix& phi, const LiftedMatrix& r_bar,
                          const SolverConfig& cfg) {
  return ista_core(phi, r_bar, cfg.alpha, {}, cfg);
}

IstaResult ista_weighted_l21_solve(const LiftedMatrix& phi, const LiftedMatrix& z_bar,
                                   const std::vector<Eigen::Index>& prev_support,
                                   const SolverConfig& cfg) {
  std::vector<double> weights(static_cast<std::size_t>(phi.complex_cols()), 1.0);
  for (const Eigen::Index j : prev_support) {
    if (j < 0 || j >= phi.complex_cols()) {
      throw std::invalid_argument("ista_weighted_l21_solve: support index out of range");
    }
    weights[static_cast<std::size_t>(j)] = cfg.omega_fixed;
  }
  return ista_core(phi, z_bar, cfg.lambda, weights, cfg);
}

OracleResult oracle_ls(const LiftedMatrix& phi, const LiftedMatrix& z_bar,
                       const std::vector<Eigen::Index>& true_support) {
  if (phi.kind() != LiftKind::Operator || z_bar.kind() != LiftKind::Signal ||
      phi.complex_rows() != z_bar.complex_rows()) {
    throw std::invalid_argument("oracle_ls: phi/measurement shapes do not conform");
  }
  const Eigen::Index m = phi.complex_cols();
  const Eigen::Index cols = z_bar.complex_cols();

  OracleResult res;
  res.estimate =
      LiftedMatrix::adopt_signal(Eigen::MatrixXd::Zero(2 * m, cols));
  if (true_support.empty()) return res;

  const ComplexMatrix a = unlift_operator(phi);
  const ComplexMatrix z = unlift_signal(z_bar);
  ComplexMatrix a_sub(a.rows(), static_cast<Eigen::Index>(true_support.size()));
  for (std::size_t k = 0; k < true_support.size(); ++k) {
    const Eigen::Index j = true_support[k];
    if (j < 0 || j >= m) throw std::invalid_argument("oracle_ls: support index out of range");
    a_sub.col(static_cast<Eigen::Index>(k)) = a.col(j);
  }

  Eigen::CompleteOrthogonalDecomposition<ComplexMatrix> cod(a_sub);
  res.rank_deficient = cod.rank() < a_sub.cols();
  const ComplexMatrix coeff = cod.solve(z);

  ComplexMatrix full = ComplexMatrix::Zero(m, cols);
  for (std::size_t k = 0; k < true_support.size(); ++k) {
    full.row(true_support[k]) = coeff.row(static_cast<Eigen::Index>(k));
  }
  res.estimate = lift_signal(full);
  return res;
}

double kkt_residual_l21(const LiftedMatrix& phi, const LiftedMatrix& r_bar,
                        const LiftedMatrix& estimate, double alpha,
                        const std::vector<double>& weights) {
  const Eigen::MatrixXd& a = phi.data();
  const Eigen::MatrixXd grad = a.transpose() * (a * estimate.data() - r_bar.data());
  const Eigen::VectorXd est_norms = group_row_norms(estimate.data());
  const Eigen::Index m = estimate.complex_rows();

  double worst = 0.0;
  for (Eigen::Index j = 0; j < m; ++j) {
    const double w = weights.empty() ? 1.0 : weights[static_cast<std::size_t>(j)];
    Eigen::MatrixXd g(2, grad.cols());
    g.row(0) = grad.row(j);
    g.row(1) = grad.row(m + j);
    if (est_norms(j) > 0.0) {
      Eigen::MatrixXd dir(2, grad.cols());
      dir.row(0) = estimate.data().row(j);
      dir.row(1) = estimate.data().row(m + j);
      worst = std::max(worst, (g + alpha * w * dir / est_norms(j)).norm());
    } else {
      worst = std::max(worst, std::max(g.norm() - alpha * w, 0.0));
    }
  }
  return worst;
}

std::vector<double> ista_alpha_grid() {
  std::vector<double> grid;
  grid.reserve(7);
  for (int i = 0; i < 7; ++i) grid.push_back(std::pow(10.0, -3.0 + 0.5 * i));
  return grid;
}

}  // namespace cfbss
