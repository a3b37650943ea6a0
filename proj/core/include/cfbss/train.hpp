#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cfbss/dataset.hpp"
#include "cfbss/nets.hpp"

namespace cfbss {

/// Raised when optimization produces non-finite losses or a stage cannot
/// improve its objective even after the seeded retries.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainConfig {
  double learning_rate = 0.0005;       // stage-A Adam rate
  double refine_lr = 0.0001;           // stage-B joint refinement rate
  int train_batch = 32;
  int val_batch = 100;
  int layerwise_steps_per_stage = 50;  // optimizer steps per epoch within a stage
  int max_epochs_per_stage = 40;
  int patience = 5;                    // validation checks without improvement
  std::uint64_t seed = 0;

  void validate() const;
};

/// First/second moment buffers for one parameter tensor (scalars use 1x1).
struct AdamSlot {
  Eigen::MatrixXd m;
  Eigen::MatrixXd v;
  long step = 0;
};

/// Decoupled-moment Adam with beta1 = 0.9, beta2 = 0.999, eps = 1e-8.
class Adam {
 public:
  explicit Adam(double lr) : lr_(lr) {}

  void update(Eigen::MatrixXd& param, const Eigen::MatrixXd& grad, AdamSlot& slot) const;
  void update_scalar(double& param, double grad, AdamSlot& slot) const;

 private:
  double lr_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
};

struct LossResult {
  double value = 0.0;
  Eigen::MatrixXd cotangent;  // 2/size * (pred - truth)
};

/// Mean over all entries of the squared difference.
LossResult mse_loss(const LiftedMatrix& pred, const LiftedMatrix& truth);

struct CoarseGrads {
  std::vector<Eigen::MatrixXd> w;  // one per traced layer
  std::vector<double> theta;
};

/// Reverse-mode composition through a coarse_forward trace under the
/// shrinkage module's kink and constant-selection conventions. Throws
/// TrainingError when the trace is stale (params changed since the forward).
CoarseGrads backward_coarse(const CoarseNetParams& params, const LiftedMatrix& phi,
                            const CoarseTrace& trace, const Eigen::MatrixXd& output_cotangent);

struct FineGrads {
  std::vector<Eigen::MatrixXd> w;
  std::vector<double> theta;
  double omega = 0.0;
};

/// Per-frame reverse pass; the inter-frame support chain is a stop-gradient
/// (weights are constants of each frame) and the coarse initialization
/// receives no cotangent (the coarse net is frozen during fine training).
FineGrads backward_fine(const FineNetParams& params, const LiftedMatrix& phi,
                        const FineTrace& trace, const Eigen::MatrixXd& output_cotangent);

struct GradcheckReport {
  double max_rel_error = 0.0;
  int checked_points = 0;
  int excluded_points = 0;  // FD interval crossed a branch or sat within 1e-3 of a kink
  double tolerance = 1e-5;
  bool passed = false;
  std::string worst_param;
};

/// Central-difference audit (step 1e-6, scaled by parameter magnitude) of
/// every W entry, every theta, and omega for fine nets. Relative errors are
/// measured against the per-tensor infinity norm. `inject_fault` flips the
/// sign of one analytic theta gradient so the harness can prove it catches
/// corrupted VJPs.
GradcheckReport gradcheck_coarse(const CoarseNetParams& params, const LiftedMatrix& phi,
                                 const LiftedMatrix& r_bar, const LiftedMatrix& truth,
                                 SelectionMode mode, double tolerance = 1e-5,
                                 bool inject_fault = false);
GradcheckReport gradcheck_fine(const FineNetParams& params, const LiftedMatrix& phi,
                               const std::vector<LiftedMatrix>& z_frames,
                               const std::vector<LiftedMatrix>& coarse_frames,
                               const LiftedMatrix& truth, double tolerance = 1e-5,
                               bool inject_fault = false);

struct StageRecord {
  int layer = 0;        // 1-based layer the stage extended the net to
  char stage = 'A';     // 'A' = new layer only, 'B' = joint refinement
  int steps = 0;
  int retries = 0;
  double initial_loss = 0.0;  // first-batch loss before updates
  double final_loss = 0.0;    // same batch after the stage
  double best_val_loss = 0.0;
  int clamp_events = 0;
};

struct TrainResult {
  NetCheckpoint checkpoint;
  std::vector<StageRecord> stages;
  std::vector<std::string> log_lines;  // append-only: step stage layer losses clamps
  double final_val_loss = 0.0;
  int total_steps = 0;
  int total_clamp_events = 0;
  bool health_ok = true;  // false when > 1% of steps clamped theta/omega
};

/// Layer-wise protocol: for l = 1..layers, stage A trains layer l's W/theta
/// (plus omega for fine nets) against the truncated net's output, then stage
/// B jointly refines layers 1..l at refine_lr. Each stage early-stops on
/// `patience` validation checks without improvement and restores its best
/// parameters. A stage whose first-batch loss fails to improve is retried
/// with a reshuffled order (twice) before TrainingError; NaN loss aborts.
TrainResult train_coarse(const Dataset& train, const Dataset& val, const TrainConfig& cfg,
                         SelectionMode mode, int layers);

/// Same protocol for the fine net; `frozen_coarse` provides the per-frame
/// initialization and is never modified.
TrainResult train_fine(const Dataset& train, const Dataset& val, const TrainConfig& cfg,
                       const CoarseNetParams& frozen_coarse, int layers);

}  // namespace cfbss
