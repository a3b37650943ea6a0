#pragma once

#include <cstdint>
#include <vector>

#include "cfbss/lift.hpp"

namespace cfbss {

/// Linear ramp for the selected-support cardinality across unrolled layers.
/// Layer l (0-based) exempts the floor(fraction_at(l) * group_count) largest
/// groups from shrinkage; the fraction grows from p_min/M at the first layer
/// to p_max/M at the last.
struct SupportSchedule {
  Eigen::Index p_min = 0;
  Eigen::Index p_max = 0;
  int num_layers = 1;
  Eigen::Index group_count = 0;

  void validate() const;
  double fraction_at(int layer) const;
};

/// Per-group threshold scaling: weight(j) = omega on flagged groups (the
/// previous frame's recovered support), 1 elsewhere. omega is the single
/// trainable scalar shared by all flagged groups.
struct GroupWeights {
  std::vector<std::uint8_t> weighted;  // size = group count
  double omega = 1.0;

  static GroupWeights uniform(Eigen::Index groups);
  static GroupWeights from_support(const std::vector<Eigen::Index>& support, Eigen::Index groups,
                                   double omega);

  double weight(Eigen::Index j) const { return weighted[static_cast<std::size_t>(j)] ? omega : 1.0; }
  Eigen::VectorXd omega_per_group() const;
  Eigen::Index groups() const { return static_cast<Eigen::Index>(weighted.size()); }
};

/// Indices of the floor(p_fraction * size) largest entries of `norms`,
/// ties broken toward the smaller index. Returned ascending.
std::vector<Eigen::Index> support_select(const Eigen::VectorXd& norms, double p_fraction);

/// 0/1 membership mask over [0, groups) for an index set.
std::vector<std::uint8_t> membership_mask(const std::vector<Eigen::Index>& indices,
                                          Eigen::Index groups);

/// Block soft-threshold with support selection, applied per paired-row group
/// of a stacked 2M x c matrix. Group j with norm n_j maps to:
///   itself          if n_j > theta and j is selected,
///   (n_j-theta)/n_j if n_j > theta and j is not selected,
///   zero            otherwise.
Eigen::MatrixXd bss_apply(const Eigen::MatrixXd& v, double theta,
                          const std::vector<std::uint8_t>& selected);

/// Generalized form with per-group threshold theta * weight(j) on the shrink
/// and zero branches; the preserve branch keeps the unweighted theta. Branches
/// are evaluated in that order, so a selected group with
/// theta*w_j < n_j <= theta is zeroed.
Eigen::MatrixXd gbss_apply(const Eigen::MatrixXd& v, double theta, const GroupWeights& weights,
                           const std::vector<std::uint8_t>& selected);

LiftedMatrix bss_forward(const LiftedMatrix& v, double theta,
                         const std::vector<Eigen::Index>& omega_sel);
LiftedMatrix gbss_forward(const LiftedMatrix& v, double theta, const GroupWeights& weights,
                          const std::vector<Eigen::Index>& omega_sel);

struct GbssVjp {
  Eigen::MatrixXd input_cotangent;
  double theta_cotangent = 0.0;
  double omega_cotangent = 0.0;
};

/// Reverse-mode derivative of gbss under these conventions: the selected set
/// is a constant, the shrink-branch Jacobian
/// (1 - t/n) I + (t/n^3) vv^T with t = theta*w_j is used on shrunk groups and
/// exactly at kinks (n = theta or n = t), preserved groups pass the cotangent
/// through, zeroed groups absorb it. omega_cotangent accumulates over weighted
/// shrunk groups only.
GbssVjp gbss_vjp(const Eigen::MatrixXd& v, double theta, const GroupWeights& weights,
                 const std::vector<std::uint8_t>& selected, const Eigen::MatrixXd& upstream);
GbssVjp gbss_vjp(const LiftedMatrix& v, double theta, const GroupWeights& weights,
                 const std::vector<Eigen::Index>& omega_sel, const Eigen::MatrixXd& upstream);

/// Scalar soft-threshold with support selection over every entry of `v`
/// (each entry is its own group; flat index = row + col * rows).
Eigen::MatrixXd ess_apply(const Eigen::MatrixXd& v, double theta,
                          const std::vector<std::uint8_t>& selected);

struct EssVjp {
  Eigen::MatrixXd input_cotangent;
  double theta_cotangent = 0.0;
};

EssVjp ess_vjp(const Eigen::MatrixXd& v, double theta, const std::vector<std::uint8_t>& selected,
               const Eigen::MatrixXd& upstream);

}  // namespace cfbss
