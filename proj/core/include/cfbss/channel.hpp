#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "cfbss/config.hpp"
#include "cfbss/lift.hpp"

namespace cfbss {

/// Dimensions and sparsity law of one synthetic angular-domain scenario.
///
/// M transmit antennas (angular bins), N receive antennas, pilot length T,
/// L frames per episode. Per-frame support sizes are drawn from the integer
/// uniform Z(s_bar-3, s_bar-1), adjacent-frame overlaps from Z(s_c, s_c+1),
/// and every frame contains a common support of size S_common.
struct SparsityConfig {
  Eigen::Index M = 128;
  Eigen::Index N = 2;
  Eigen::Index T = 33;
  Eigen::Index L = 7;
  Eigen::Index s_bar = 15;
  Eigen::Index s_c = 10;
  Eigen::Index S_common = 8;
  double snr_db = 30.0;

  Eigen::Index nl() const { return N * L; }

  /// Throws std::invalid_argument unless N < M, T < M, s_bar - 3 >= s_c,
  /// S_common <= s_c, and all dimensions are positive (s_c, S_common >= 0).
  void validate() const;

  KeyValueConfig to_kv() const;
  static SparsityConfig from_kv(const KeyValueConfig& kv);
};

/// Per-frame angular support sets plus the all-frame common set.
struct SupportSequence {
  std::vector<Eigen::Index> common;                  // sorted, 0-based
  std::vector<std::vector<Eigen::Index>> per_frame;  // each sorted, 0-based

  /// Checks the three structural invariants against `cfg`; throws on violation.
  void validate(const SparsityConfig& cfg) const;
};

Eigen::Index intersection_size(const std::vector<Eigen::Index>& a,
                               const std::vector<Eigen::Index>& b);
bool is_subset(const std::vector<Eigen::Index>& sub, const std::vector<Eigen::Index>& super);

/// Draws a support sequence satisfying all SupportSequence invariants by
/// construction: the common set is shared verbatim, each adjacent overlap is
/// exactly Z(s_c, s_c+1), and fresh indices are uniform over the unused bins.
/// Infeasible (k, n_i) draws are resampled up to 100 times, after which a
/// ConfigInfeasibleError is thrown.
SupportSequence sample_support_sequence(const SparsityConfig& cfg, std::mt19937_64& rng);

/// M x (N*L) angular channel: rows of frame block i indexed by the support
/// carry i.i.d. CN(0,1) entries, every other row is exactly zero.
ComplexMatrix sample_channel(const SupportSequence& supports, const SparsityConfig& cfg,
                             std::mt19937_64& rng);

/// M x T pilot with real and imaginary parts i.i.d. uniform on
/// [-sqrt(1/M), sqrt(1/M)].
ComplexMatrix sample_pilot(const SparsityConfig& cfg, std::mt19937_64& rng);

/// Lifted sensing operator for the angular model: lift of X^H V, shape 2T x 2M.
LiftedMatrix measurement_operator(const ComplexMatrix& pilot, const ComplexMatrix& v_unitary);

struct Observation {
  LiftedMatrix r_bar;                 // 2T x N*L
  std::vector<LiftedMatrix> z_frames; // L signals, 2T x N each
  double noise_var = 0.0;             // per-entry complex noise variance
};

/// Noisy measurement R = Phi G + noise. The complex per-entry noise variance
/// is snr-relative to the empirical mean per-entry power of Phi*G for this
/// episode; an infinite snr_db yields an exact noiseless observation.
Observation observe(const LiftedMatrix& phi, const ComplexMatrix& g, const SparsityConfig& cfg,
                    std::mt19937_64& rng);

/// Column blocks [i*frame_cols, (i+1)*frame_cols) of a lifted signal.
std::vector<LiftedMatrix> split_frames(const LiftedMatrix& sig, Eigen::Index frame_cols);

/// Deterministic per-stream seed derivation (splitmix64 finalizer).
std::uint64_t split_seed(std::uint64_t master, std::uint64_t index);

}  // namespace cfbss
