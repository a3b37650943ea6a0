#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "cfbss/dataset.hpp"
#include "cfbss/metrics.hpp"
#include "cfbss/nets.hpp"

namespace cfbss {

struct EvalOptions {
  bool squared_nmse = false;    // conventional squared-norm NMSE ratio
  bool per_sample_ase = false;  // per-sample NMSE inside the ASE expectation
  double ista_tol = 1e-4;
  int ista_max_iters = 4000;
  int timing_reps = 5;          // median wall time over this many inference runs
  int tuning_episodes = 50;     // validation episodes used for the alpha grid
};

struct ExperimentPlan {
  std::string axis;                 // "T" or "snr"
  std::vector<double> axis_values;  // integral when axis == "T"
  SparsityConfig base;              // fixed parameters for every cell
  std::vector<std::string> schemes;
  std::filesystem::path artifact_root;  // per-cell datasets and checkpoints
  std::uint64_t seed = 0;
  std::string config_digest;
  std::string config_path = "<config>";  // echoed in missing-artifact hints
  EvalOptions options;

  void validate() const;
};

/// "30" / "12.5" / "inf" — the SNR component of cell directory names.
std::string snr_token(double snr_db);

/// Per-cell artifact directory: <root>/T<T>_snr<token>.
std::filesystem::path cell_dir(const std::filesystem::path& root, const SparsityConfig& cell);

/// Scheme tags understood by the evaluator, in canonical emission order.
const std::vector<std::string>& known_schemes();

/// Checkpoint files (relative to the cell directory) a scheme needs.
std::vector<std::string> checkpoints_required(const std::string& scheme);

struct TimedInference {
  std::vector<LiftedMatrix> estimates;  // from the final repetition
  double median_seconds = 0.0;
};

/// Runs `infer` `reps` times, returning the median wall time. An outer timer
/// brackets the loop and must cover the summed per-repetition times; a
/// violation of that nested-timer consistency check throws.
TimedInference time_inference(const std::function<std::vector<LiftedMatrix>()>& infer, int reps);

/// Mean per-layer test-set errors ||G^l - G||_F of a trained model; `fine`
/// may be null. Used for the layer-decay diagnostic.
struct LayerErrorProfile {
  std::vector<double> coarse;
  std::vector<double> fine;
};
LayerErrorProfile per_layer_errors(const CoarseNetParams& coarse, const FineNetParams* fine,
                                   const Dataset& test, SelectionMode mode);

/// Evaluates one scheme on one cell: loads its checkpoints from `cell`,
/// tunes baseline regularization on the validation split when needed, times
/// test-set inference, and fills a MetricRecord. Missing artifacts raise
/// IoError messages naming the command that generates them.
MetricRecord evaluate_scheme(const std::string& scheme, const Dataset& test,
                             const std::filesystem::path& cell, const ExperimentPlan& plan);

struct SweepOutcome {
  std::vector<MetricRecord> records;
  std::vector<std::filesystem::path> emitted;  // csv, meta, and .dat paths
};

/// Runs every (scheme, axis point) cell in deterministic order, writes
/// results.csv plus a self-describing results.meta, and emits per-scheme
/// gnuplot .dat series into `out_dir`.
SweepOutcome run_sweep(const ExperimentPlan& plan, const std::filesystem::path& out_dir);

/// Fixed-width text table of records (the `report` rendering).
std::string render_table(const std::vector<MetricRecord>& records);

/// Two-column gnuplot series per scheme and metric: <metric>_<scheme>.dat
/// with "axis_value value" rows. The axis is T when it varies, else SNR.
std::vector<std::filesystem::path> emit_dat_series(const std::vector<MetricRecord>& records,
                                                   const std::filesystem::path& out_dir);

}  // namespace cfbss
