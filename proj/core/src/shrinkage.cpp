#include "cfbss/shrinkage.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cfbss {

void SupportSchedule::validate() const {
  if (p_min < 0 || p_min > p_max || p_max > group_count)
    throw std::invalid_argument("SupportSchedule: need 0 <= p_min <= p_max <= group_count");
  if (num_layers < 1) throw std::invalid_argument("SupportSchedule: num_layers must be >= 1");
}

double SupportSchedule::fraction_at(int layer) const {
  if (layer < 0 || layer >= num_layers)
    throw std::invalid_argument("SupportSchedule: layer index out of range");
  if (group_count == 0) return 0.0;
  const double cardinality =
      num_layers == 1
          ? static_cast<double>(p_min)
          : static_cast<double>(p_min) + static_cast<double>(p_max - p_min) *
                                             (static_cast<double>(layer) /
                                              static_cast<double>(num_layers - 1));
  return cardinality / static_cast<double>(group_count);
}

GroupWeights GroupWeights::uniform(Eigen::Index groups) {
  GroupWeights w;
  w.weighted.assign(static_cast<std::size_t>(groups), 0);
  w.omega = 1.0;
  return w;
}

GroupWeights GroupWeights::from_support(const std::vector<Eigen::Index>& support,
                                        Eigen::Index groups, double omega) {
  if (omega <= 0.0) throw std::invalid_argument("GroupWeights: omega must be positive");
  GroupWeights w;
  w.weighted.assign(static_cast<std::size_t>(groups), 0);
  w.omega = omega;
  for (Eigen::Index j : support) {
    if (j < 0 || j >= groups) throw std::invalid_argument("GroupWeights: support index out of range");
    w.weighted[static_cast<std::size_t>(j)] = 1;
  }
  return w;
}

Eigen::VectorXd GroupWeights::omega_per_group() const {
  Eigen::VectorXd w(groups());
  for (Eigen::Index j = 0; j < w.size(); ++j) w[j] = weight(j);
  return w;
}

std::vector<Eigen::Index> support_select(const Eigen::VectorXd& norms, double p_fraction) {
  if (p_fraction < 0.0 || p_fraction > 1.0)
    throw std::invalid_argument("support_select: fraction must lie in [0, 1]");
  const Eigen::Index m = norms.size();
  // p*m is a near-integer cardinality; the slack absorbs one-ulp rounding.
  const auto k = static_cast<Eigen::Index>(
      std::floor(p_fraction * static_cast<double>(m) + 1e-9));
  const Eigen::Index count = std::min(k, m);
  if (count <= 0) return {};
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(m));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::partial_sort(idx.begin(), idx.begin() + count, idx.end(),
                    [&norms](Eigen::Index a, Eigen::Index b) {
                      if (norms[a] != norms[b]) return norms[a] > norms[b];
                      return a < b;
                    });
  std::vector<Eigen::Index> out(idx.begin(), idx.begin() + count);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::uint8_t> membership_mask(const std::vector<Eigen::Index>& indices,
                                          Eigen::Index groups) {
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(groups), 0);
  for (Eigen::Index j : indices) {
    if (j < 0 || j >= groups) throw std::invalid_argument("membership_mask: index out of range");
    mask[static_cast<std::size_t>(j)] = 1;
  }
  return mask;
}

namespace {

void check_stacked(const Eigen::MatrixXd& v, const std::vector<std::uint8_t>& selected,
                   double theta) {
  if (theta < 0.0) throw std::invalid_argument("shrinkage: theta must be >= 0");
  if (v.rows() % 2 != 0) throw std::invalid_argument("shrinkage: stacked input needs even rows");
  if (static_cast<Eigen::Index>(selected.size()) != v.rows() / 2)
    throw std::invalid_argument("shrinkage: selection mask size must equal group count");
}

}  // namespace

Eigen::MatrixXd gbss_apply(const Eigen::MatrixXd& v, double theta, const GroupWeights& weights,
                           const std::vector<std::uint8_t>& selected) {
  check_stacked(v, selected, theta);
  const Eigen::Index m = v.rows() / 2;
  if (weights.groups() != m) throw std::invalid_argument("gbss: weights size must equal group count");
  const Eigen::VectorXd norms = group_row_norms(v);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(v.rows(), v.cols());
  for (Eigen::Index j = 0; j < m; ++j) {
    const double n = norms[j];
    if (n == 0.0) continue;
    if (selected[static_cast<std::size_t>(j)] && n > theta) {
      out.row(j) = v.row(j);
      out.row(m + j) = v.row(m + j);
    } else if (!selected[static_cast<std::size_t>(j)] && n > theta * weights.weight(j)) {
      const double scale = (n - theta * weights.weight(j)) / n;
      out.row(j) = v.row(j) * scale;
      out.row(m + j) = v.row(m + j) * scale;
    }
    // else: zero branch, already zeroed
  }
  return out;
}

Eigen::MatrixXd bss_apply(const Eigen::MatrixXd& v, double theta,
                          const std::vector<std::uint8_t>& selected) {
  return gbss_apply(v, theta, GroupWeights::uniform(v.rows() / 2), selected);
}

LiftedMatrix bss_forward(const LiftedMatrix& v, double theta,
                         const std::vector<Eigen::Index>& omega_sel) {
  if (v.kind() != LiftKind::Signal) throw std::invalid_argument("bss_forward: expected a signal");
  return LiftedMatrix::adopt_signal(
      bss_apply(v.data(), theta, membership_mask(omega_sel, v.complex_rows())));
}

LiftedMatrix gbss_forward(const LiftedMatrix& v, double theta, const GroupWeights& weights,
                          const std::vector<Eigen::Index>& omega_sel) {
  if (v.kind() != LiftKind::Signal) throw std::invalid_argument("gbss_forward: expected a signal");
  return LiftedMatrix::adopt_signal(
      gbss_apply(v.data(), theta, weights, membership_mask(omega_sel, v.complex_rows())));
}

GbssVjp gbss_vjp(const Eigen::MatrixXd& v, double theta, const GroupWeights& weights,
                 const std::vector<std::uint8_t>& selected, const Eigen::MatrixXd& upstream) {
  check_stacked(v, selected, theta);
  if (upstream.rows() != v.rows() || upstream.cols() != v.cols())
    throw std::invalid_argument("gbss_vjp: upstream shape mismatch");
  const Eigen::Index m = v.rows() / 2;
  if (weights.groups() != m)
    throw std::invalid_argument("gbss_vjp: weights size must equal group count");
  const Eigen::VectorXd norms = group_row_norms(v);

  GbssVjp r;
  r.input_cotangent = Eigen::MatrixXd::Zero(v.rows(), v.cols());
  for (Eigen::Index j = 0; j < m; ++j) {
    const double n = norms[j];
    if (n == 0.0) continue;
    const double w = weights.weight(j);
    const double t = theta * w;
    const bool in_sel = selected[static_cast<std::size_t>(j)] != 0;
    if (in_sel && n > theta) {
      r.input_cotangent.row(j) = upstream.row(j);
      r.input_cotangent.row(m + j) = upstream.row(m + j);
      continue;
    }
    const bool shrunk = !in_sel && n > t;
    const bool at_kink = n == t || n == theta;
    if (shrunk || at_kink) {
      const double vu =
          v.row(j).dot(upstream.row(j)) + v.row(m + j).dot(upstream.row(m + j));
      const double a = 1.0 - t / n;
      const double b = t / (n * n * n) * vu;
      r.input_cotangent.row(j) = a * upstream.row(j) + b * v.row(j);
      r.input_cotangent.row(m + j) = a * upstream.row(m + j) + b * v.row(m + j);
      r.theta_cotangent -= w * vu / n;
      if (weights.weighted[static_cast<std::size_t>(j)]) r.omega_cotangent -= theta * vu / n;
    }
    // zeroed groups: all-zero Jacobian
  }
  return r;
}

GbssVjp gbss_vjp(const LiftedMatrix& v, double theta, const GroupWeights& weights,
                 const std::vector<Eigen::Index>& omega_sel, const Eigen::MatrixXd& upstream) {
  if (v.kind() != LiftKind::Signal) throw std::invalid_argument("gbss_vjp: expected a signal");
  return gbss_vjp(v.data(), theta, weights, membership_mask(omega_sel, v.complex_rows()), upstream);
}

Eigen::MatrixXd ess_apply(const Eigen::MatrixXd& v, double theta,
                          const std::vector<std::uint8_t>& selected) {
  if (theta < 0.0) throw std::invalid_argument("ess_apply: theta must be >= 0");
  if (static_cast<Eigen::Index>(selected.size()) != v.size())
    throw std::invalid_argument("ess_apply: selection mask size must equal entry count");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(v.rows(), v.cols());
  const double* src = v.data();
  double* dst = out.data();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double x = src[i];
    const double a = std::abs(x);
    if (a == 0.0) continue;
    if (selected[static_cast<std::size_t>(i)] && a > theta) {
      dst[i] = x;
    } else if (!selected[static_cast<std::size_t>(i)] && a > theta) {
      dst[i] = x > 0 ? x - theta : x + theta;
    }
  }
  return out;
}

EssVjp ess_vjp(const Eigen::MatrixXd& v, double theta, const std::vector<std::uint8_t>& selected,
               const Eigen::MatrixXd& upstream) {
  if (theta < 0.0) throw std::invalid_argument("ess_vjp: theta must be >= 0");
  if (static_cast<Eigen::Index>(selected.size()) != v.size())
    throw std::invalid_argument("ess_vjp: selection mask size must equal entry count");
  if (upstream.rows() != v.rows() || upstream.cols() != v.cols())
    throw std::invalid_argument("ess_vjp: upstream shape mismatch");
  EssVjp r;
  r.input_cotangent = Eigen::MatrixXd::Zero(v.rows(), v.cols());
  const double* src = v.data();
  const double* up = upstream.data();
  double* dst = r.input_cotangent.data();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const double x = src[i];
    const double a = std::abs(x);
    if (a == 0.0) continue;
    if (selected[static_cast<std::size_t>(i)] && a > theta) {
      dst[i] = up[i];
    } else if ((!selected[static_cast<std::size_t>(i)] && a > theta) || a == theta) {
      // scalar shrink branch (kink included): d out/dv = 1, d out/dtheta = -sign(v)
      dst[i] = up[i];
      r.theta_cotangent -= (x > 0 ? 1.0 : -1.0) * up[i];
    }
  }
  return r;
}

}  // namespace cfbss
