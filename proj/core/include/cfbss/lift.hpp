#pragma once

#include <Eigen/Dense>
#include <complex>
#include <cstdint>
#include <stdexcept>

namespace cfbss {

using ComplexMatrix = Eigen::MatrixXcd;

/// Paired-row group of a lifted signal: complex row j lives in real rows
/// {j, M + j} of the 2M-row stacked representation.
struct RowGroup {
  Eigen::Index group_index;  // j in [0, M)
  Eigen::Index real_row;     // j
  Eigen::Index imag_row;     // M + j
};

inline RowGroup row_group(Eigen::Index j, Eigen::Index num_groups) {
  if (j < 0 || j >= num_groups) throw std::invalid_argument("row_group: index out of range");
  return RowGroup{j, j, num_groups + j};
}

enum class LiftKind { Operator, Signal };

/// Real-valued carrier for complex matrices.
///
/// Operator kind, shape 2r x 2c with block layout [[Re A, -Im A], [Im A, Re A]];
/// signal kind, shape 2M x c with rows [0, M) the real part and [M, 2M) the
/// imaginary part. Operator-times-signal in the lifted domain reproduces the
/// complex product exactly (up to rounding), which is what every net layer
/// relies on.
class LiftedMatrix {
 public:
  LiftedMatrix() = default;

  /// Wraps an already-stacked real matrix as a signal. Requires an even row count.
  static LiftedMatrix adopt_signal(Eigen::MatrixXd data);

  /// Wraps a real matrix as an operator. Requires even rows/cols and the exact
  /// [[A, -B], [B, A]] block structure (intended for deserialization paths
  /// where bit-exactness holds).
  static LiftedMatrix adopt_operator(Eigen::MatrixXd data);

  LiftKind kind() const { return kind_; }
  const Eigen::MatrixXd& data() const { return data_; }
  Eigen::MatrixXd& mutable_data() { return data_; }

  Eigen::Index rows() const { return data_.rows(); }
  Eigen::Index cols() const { return data_.cols(); }

  /// Number of complex rows (signals: M; operators: r).
  Eigen::Index complex_rows() const { return data_.rows() / 2; }
  /// Number of complex columns (signals: cols; operators: cols/2).
  Eigen::Index complex_cols() const {
    return kind_ == LiftKind::Signal ? data_.cols() : data_.cols() / 2;
  }

  double frobenius_norm() const { return data_.norm(); }

 private:
  LiftedMatrix(LiftKind kind, Eigen::MatrixXd data) : kind_(kind), data_(std::move(data)) {}
  LiftKind kind_ = LiftKind::Signal;
  Eigen::MatrixXd data_;
};

/// [[Re A, -Im A], [Im A, Re A]], shape 2r x 2c.
LiftedMatrix lift_operator(const ComplexMatrix& a);

/// [Re S; Im S], shape 2M x c. Preserves the Frobenius norm exactly.
LiftedMatrix lift_signal(const ComplexMatrix& s);

/// Exact inverse of lift_signal. Throws std::invalid_argument on operator
/// inputs or odd row counts.
ComplexMatrix unlift_signal(const LiftedMatrix& l);

/// Exact inverse of lift_operator (reads the top block row).
ComplexMatrix unlift_operator(const LiftedMatrix& l);

/// True when data carries the operator block structure to within `tol` per entry.
bool has_operator_structure(const Eigen::MatrixXd& data, double tol);

/// Per-group l2 norms of a lifted signal: entry j is the l2 norm of complex
/// row j, i.e. sqrt(sum_c data(j,c)^2 + data(M+j,c)^2).
Eigen::VectorXd group_row_norms(const Eigen::MatrixXd& stacked);
Eigen::VectorXd group_row_norms(const LiftedMatrix& sig);

/// n x n unitary DFT: entry (k,l) = exp(-2*pi*i*k*l/n) / sqrt(n).
ComplexMatrix dft_unitary(Eigen::Index n);

/// Largest squared singular value of `a`, estimated by seeded power iteration
/// on a^T a. Deterministic for a fixed seed.
double spectral_norm_sq(const Eigen::MatrixXd& a, int iters = 50, std::uint64_t seed = 17);

}  // namespace cfbss
