#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "cfbss/channel.hpp"
#include "cfbss/config.hpp"
#include "cfbss/lift.hpp"
#include "cfbss/shrinkage.hpp"

namespace cfbss {

/// One unrolled layer: a learned gradient map W (2M x 2T) and a threshold.
struct UnrolledLayer {
  Eigen::MatrixXd w;
  double theta = 0.0;
};

/// Coarse estimation net: L_e layers applied to the whole-episode
/// measurement; the schedule ramps the shrink-exempt support size per layer.
struct CoarseNetParams {
  std::vector<UnrolledLayer> layers;
  SupportSchedule schedule;

  void validate(Eigen::Index m, Eigen::Index t) const;
};

/// Fine correction net: L_c layers applied per frame, seeded by the coarse
/// frame estimate, with one shared threshold weight omega applied to groups
/// recovered in the previous frame.
struct FineNetParams {
  std::vector<UnrolledLayer> layers;
  double omega = 0.5;
  SupportSchedule schedule;

  void validate(Eigen::Index m, Eigen::Index t) const;
};

/// How the per-layer shrink-exempt set is formed.
enum class SelectionMode {
  Grouped,      // paired-row groups, top-k by group norm
  None,         // empty set: pure group soft-thresholding
  Elementwise,  // every scalar entry is its own group
};

enum class NetVariant { TwoStage, CoarseOnly, NoSupportSelection, ElementwiseSS };

std::string variant_tag(NetVariant v);  // two_stage / coarse_only / no_ss / elementwise_ss
NetVariant variant_from_tag(const std::string& tag);

/// Everything needed to replay or differentiate one layer application.
struct LayerTrace {
  Eigen::MatrixXd input;                // G^{l-1}, 2M x C
  Eigen::MatrixXd residual;             // r - phi * input, 2T x C
  Eigen::MatrixXd pre;                  // input + W * residual
  std::vector<Eigen::Index> selected;   // group indices (flat entries in Elementwise mode)
  Eigen::MatrixXd output;               // activation(pre)
  double theta = 0.0;                   // threshold the layer ran with
};

struct CoarseTrace {
  std::vector<LayerTrace> layers;
  SelectionMode mode = SelectionMode::Grouped;

  LiftedMatrix output() const;  // final iterate as a signal lift
};

/// Unrolled forward pass G^0 = 0, G^l = activation(G^{l-1} + W_l (r - phi
/// G^{l-1})). `active_layers` < 0 runs every layer; otherwise only the first
/// `active_layers` (the truncated net used during layer-wise training).
CoarseTrace coarse_forward(const CoarseNetParams& params, const LiftedMatrix& phi,
                           const LiftedMatrix& r_bar, SelectionMode mode = SelectionMode::Grouped,
                           int active_layers = -1);

struct FrameTrace {
  GroupWeights weights;           // omega on the previous frame's support
  std::vector<LayerTrace> layers;
};

struct FineTrace {
  std::vector<FrameTrace> frames;
  LiftedMatrix output;  // 2M x N*L concatenation of the per-frame estimates
};

/// Sequential per-frame correction: frame i starts from the coarse estimate
/// of that frame, with thresholds weighted by omega on the support recovered
/// from frame i-1 (frame 1 runs unweighted).
FineTrace fine_forward_episode(const FineNetParams& params, const LiftedMatrix& phi,
                               const std::vector<LiftedMatrix>& z_frames,
                               const std::vector<LiftedMatrix>& coarse_frames,
                               int active_layers = -1);

/// Groups whose norm exceeds a defensive 1e-12 floor (thresholded outputs
/// carry exact zeros).
std::vector<Eigen::Index> support_extract(const LiftedMatrix& s);

struct TwoStageResult {
  LiftedMatrix coarse_estimate;
  LiftedMatrix estimate;
};

/// Full pipeline: coarse net on the concatenated measurement, split into
/// frames of `n_rx` columns, then the fine correction net.
TwoStageResult two_stage_forward(const CoarseNetParams& coarse, const FineNetParams& fine,
                                 const LiftedMatrix& phi, const LiftedMatrix& r_bar,
                                 Eigen::Index n_rx);

/// Dispatch table for the benchmark schemes. `fine` may be null except for
/// TwoStage; the ablation variants run the coarse-shaped params under their
/// selection mode.
LiftedMatrix variant_forward(NetVariant variant, const CoarseNetParams& coarse,
                             const FineNetParams* fine, const LiftedMatrix& phi,
                             const LiftedMatrix& r_bar, Eigen::Index n_rx);

/// Support-size schedules: the coarse ramp spans [S_common - 2, S_common + 2]
/// clamped to [0, M]; the fine ramp spans [s_c, s_bar].
SupportSchedule make_coarse_schedule(const SparsityConfig& cfg, int layers);
SupportSchedule make_fine_schedule(const SparsityConfig& cfg, int layers);

/// Learned-ISTA initialization: every W = phi^T / sigma_max^2(phi), theta =
/// 0.1 x median nonzero group norm of phi^T r over the calibration signals
/// (0 when all groups are zero), omega = 0.5.
CoarseNetParams init_coarse_params(const LiftedMatrix& phi, int layers, Eigen::Index p_min,
                                   Eigen::Index p_max,
                                   const std::vector<LiftedMatrix>& calibration);
FineNetParams init_fine_params(const LiftedMatrix& phi, int layers, Eigen::Index p_min,
                               Eigen::Index p_max, const std::vector<LiftedMatrix>& calibration,
                               double omega = 0.5);

std::size_t parameter_count(const CoarseNetParams& p);  // layers * (4MT + 1)
std::size_t parameter_count(const FineNetParams& p);    // layers * (4MT + 1) + 1

/// Checkpoint container (.cep): ASCII header "CEP1 k=v ...\n" with the net
/// kind, shapes, schedule, and training metadata, then per-layer W and theta
/// blocks (and a final omega block for fine nets) in the dataset block format.
struct NetCheckpoint {
  std::string kind;        // "coarse" | "fine" | "no_ss" | "elementwise_ss"
  CoarseNetParams coarse;  // populated unless kind == "fine"
  FineNetParams fine;      // populated when kind == "fine"
  KeyValueConfig meta;     // free-form training metadata

  bool is_fine() const { return kind == "fine"; }
};

SelectionMode selection_mode_for_kind(const std::string& kind);
std::string kind_for_mode(SelectionMode mode);  // coarse / no_ss / elementwise_ss

void write_checkpoint(const NetCheckpoint& ckpt, const std::filesystem::path& path);
NetCheckpoint read_checkpoint(const std::filesystem::path& path);

}  // namespace cfbss
