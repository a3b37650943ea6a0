#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cfbss/lift.hpp"

namespace cfbss {

struct NmseResult {
  double nmse_db = 0.0;             // mean of the per-sample dB values
  std::vector<double> per_sample_db;  // aligned with the inputs; NaN where excluded
  int excluded_zero_norm = 0;
  bool perfect_recovery = false;  // some sample hit the -150 dB floor
};

/// Normalized mean square error in dB, averaged per sample:
///   (1/K) sum_j 10 log10(||G_j - Ghat_j||_F / ||G_j||_F).
/// The ratio of plain (not squared) norms is used; `squared_ratio` switches
/// to the conventional squared-norm ratio (20 log10 of the norm ratio).
/// Zero-norm truths are excluded (counted), exact recoveries floor at -150 dB.
NmseResult nmse(const std::vector<LiftedMatrix>& truths,
                const std::vector<LiftedMatrix>& estimates, bool squared_ratio = false);

/// Physical N x M channel of one frame from its angular-domain lift:
/// rows are the per-receive-antenna spatial channels a_t * g_n.
ComplexMatrix physical_channel_frame(const LiftedMatrix& g_frame, const ComplexMatrix& a_t);

/// Achievable spectral efficiency lower bound (bits/s/Hz): the mean over
/// frames of log2 det(I_N + M*N / (10^(nmse_db/10) + noise_var) * H H^H),
/// with the determinant argument symmetrized before the eigensolve.
double ase(const std::vector<ComplexMatrix>& channel_frames, double nmse_db, double noise_var);

/// One benchmark result cell.
struct MetricRecord {
  std::string scheme;
  std::int64_t t = 0;  // pilot length
  double snr_db = 0.0;
  double nmse_db = 0.0;
  double ase_bits = 0.0;
  double wall_time_s = 0.0;
  std::int64_t sample_count = 0;
  std::uint64_t seed = 0;
  std::string config_digest;
};

/// CSV with the fixed header
/// scheme,T,snr_db,nmse_db,ase,wall_time_s,K,seed,config_digest.
void write_metrics_csv(const std::vector<MetricRecord>& records,
                       const std::filesystem::path& path);
std::vector<MetricRecord> read_metrics_csv(const std::filesystem::path& path);

extern const char* const kMetricsCsvHeader;

}  // namespace cfbss
