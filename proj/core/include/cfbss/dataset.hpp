#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "cfbss/channel.hpp"
#include "cfbss/lift.hpp"

namespace cfbss {

/// One training/evaluation episode: ground-truth lifted channel, noisy lifted
/// measurement, the true supports, and the realized noise variance.
struct EpisodeSample {
  LiftedMatrix g_bar;  // 2M x N*L
  LiftedMatrix r_bar;  // 2T x N*L
  SupportSequence supports;
  double noise_var = 0.0;
  Eigen::Index frames = 0;  // L
  Eigen::Index n_rx = 0;    // N

  LiftedMatrix z_frame(Eigen::Index i) const;  // measurement columns of frame i
  LiftedMatrix g_frame(Eigen::Index i) const;  // channel columns of frame i
};

/// A generated corpus sharing one pilot/sensing operator across episodes.
struct Dataset {
  SparsityConfig cfg;
  std::uint64_t seed = 0;
  LiftedMatrix phi;  // 2T x 2M operator lift of X^H V
  std::vector<EpisodeSample> episodes;
};

/// Samples `count` episodes. The pilot (and hence phi, with V the unitary DFT)
/// comes from stream 0 of `seed`; episode e uses stream episode_offset + e + 1,
/// so regeneration with the same seed is bit-identical, episodes are
/// order-independent, and splits built with disjoint offsets share the pilot
/// while drawing disjoint episode streams.
Dataset build_dataset(const SparsityConfig& cfg, Eigen::Index count, std::uint64_t seed,
                      std::uint64_t episode_offset = 0);

/// Binary dataset container. Layout: one ASCII header line
/// "CED1 k=v ...\n" carrying the scenario dimensions, episode count, and
/// seed, followed by raw little-endian blocks (uint64 rows, uint64 cols,
/// row-major float64 payload): phi, then per episode g_bar, r_bar, the common
/// support, L per-frame supports, and the noise variance.
void write_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

/// Raw matrix block primitives shared by the dataset and checkpoint
/// containers: uint64 rows, uint64 cols (little-endian), then a row-major
/// float64 payload. read_block throws IoError on truncation, naming `path`.
void write_block(std::ostream& out, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_block(std::istream& in, const std::filesystem::path& path);

}  // namespace cfbss
