#include "cfbss/lift.hpp"

#include <cmath>
#include <numbers>
#include <random>

namespace cfbss {

LiftedMatrix LiftedMatrix::adopt_signal(Eigen::MatrixXd data) {
  if (data.rows() % 2 != 0)
    throw std::invalid_argument("adopt_signal: malformed lift, row count must be even, got " +
                                std::to_string(data.rows()));
  return LiftedMatrix(LiftKind::Signal, std::move(data));
}

LiftedMatrix LiftedMatrix::adopt_operator(Eigen::MatrixXd data) {
  if (data.rows() % 2 != 0 || data.cols() % 2 != 0)
    throw std::invalid_argument("adopt_operator: malformed lift, dimensions must be even");
  if (!has_operator_structure(data, 0.0))
    throw std::invalid_argument("adopt_operator: block structure [[A,-B],[B,A]] violated");
  return LiftedMatrix(LiftKind::Operator, std::move(data));
}

bool has_operator_structure(const Eigen::MatrixXd& data, double tol) {
  const Eigen::Index r = data.rows() / 2;
  const Eigen::Index c = data.cols() / 2;
  if (2 * r != data.rows() || 2 * c != data.cols()) return false;
  const double d1 = (data.topLeftCorner(r, c) - data.bottomRightCorner(r, c)).cwiseAbs().maxCoeff();
  const double d2 = (data.topRightCorner(r, c) + data.bottomLeftCorner(r, c)).cwiseAbs().maxCoeff();
  return d1 <= tol && d2 <= tol;
}

LiftedMatrix lift_operator(const ComplexMatrix& a) {
  const Eigen::Index r = a.rows(), c = a.cols();
  Eigen::MatrixXd out(2 * r, 2 * c);
  out.topLeftCorner(r, c) = a.real();
  out.topRightCorner(r, c) = -a.imag();
  out.bottomLeftCorner(r, c) = a.imag();
  out.bottomRightCorner(r, c) = a.real();
  return LiftedMatrix::adopt_operator(std::move(out));
}

LiftedMatrix lift_signal(const ComplexMatrix& s) {
  const Eigen::Index m = s.rows(), c = s.cols();
  Eigen::MatrixXd out(2 * m, c);
  out.topRows(m) = s.real();
  out.bottomRows(m) = s.imag();
  return LiftedMatrix::adopt_signal(std::move(out));
}

ComplexMatrix unlift_signal(const LiftedMatrix& l) {
  if (l.kind() != LiftKind::Signal)
    throw std::invalid_argument("unlift_signal: input is not a lifted signal");
  const Eigen::Index m = l.complex_rows();
  ComplexMatrix s(m, l.cols());
  s.real() = l.data().topRows(m);
  s.imag() = l.data().bottomRows(m);
  return s;
}

ComplexMatrix unlift_operator(const LiftedMatrix& l) {
  if (l.kind() != LiftKind::Operator)
    throw std::invalid_argument("unlift_operator: input is not a lifted operator");
  const Eigen::Index r = l.complex_rows(), c = l.complex_cols();
  ComplexMatrix a(r, c);
  a.real() = l.data().topLeftCorner(r, c);
  a.imag() = l.data().bottomLeftCorner(r, c);
  return a;
}

Eigen::VectorXd group_row_norms(const Eigen::MatrixXd& stacked) {
  if (stacked.rows() % 2 != 0)
    throw std::invalid_argument("group_row_norms: row count must be even");
  const Eigen::Index m = stacked.rows() / 2;
  return (stacked.topRows(m).array().square().rowwise().sum() +
          stacked.bottomRows(m).array().square().rowwise().sum())
      .sqrt();
}

Eigen::VectorXd group_row_norms(const LiftedMatrix& sig) {
  if (sig.kind() != LiftKind::Signal)
    throw std::invalid_argument("group_row_norms: expected a lifted signal");
  return group_row_norms(sig.data());
}

ComplexMatrix dft_unitary(Eigen::Index n) {
  if (n < 1) throw std::invalid_argument("dft_unitary: dimension must be >= 1");
  ComplexMatrix f(n, n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (Eigen::Index k = 0; k < n; ++k) {
    for (Eigen::Index l = 0; l < n; ++l) {
      // k*l mod n keeps the phase argument small for large n.
      const double phase = -2.0 * std::numbers::pi * static_cast<double>((k * l) % n) /
                           static_cast<double>(n);
      f(k, l) = std::polar(scale, phase);
    }
  }
  return f;
}

double spectral_norm_sq(const Eigen::MatrixXd& a, int iters, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd v(a.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = gauss(rng);
  v.normalize();
  double sigma_sq = 0.0;
  for (int it = 0; it < iters; ++it) {
    Eigen::VectorXd w = a.transpose() * (a * v);
    const double norm = w.norm();
    if (norm == 0.0) return 0.0;
    sigma_sq = norm;  // ||A^T A v|| -> sigma_max^2 for unit v
    v = w / norm;
  }
  return sigma_sq;
}

}  // namespace cfbss
