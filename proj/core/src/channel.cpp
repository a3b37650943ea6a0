#include "cfbss/channel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cfbss {
namespace {

std::vector<Eigen::Index> draw_without_replacement(std::vector<Eigen::Index> pool,
                                                   Eigen::Index count, std::mt19937_64& rng) {
  if (count > static_cast<Eigen::Index>(pool.size())) {
    throw std::logic_error("draw_without_replacement: count exceeds pool");
  }
  for (Eigen::Index i = 0; i < count; ++i) {
    std::uniform_int_distribution<std::size_t> pick(static_cast<std::size_t>(i), pool.size() - 1);
    std::swap(pool[static_cast<std::size_t>(i)], pool[pick(rng)]);
  }
  pool.resize(static_cast<std::size_t>(count));
  std::sort(pool.begin(), pool.end());
  return pool;
}

std::vector<Eigen::Index> set_difference_sorted(const std::vector<Eigen::Index>& a,
                                                const std::vector<Eigen::Index>& b) {
  std::vector<Eigen::Index> out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

std::vector<Eigen::Index> complement_sorted(const std::vector<Eigen::Index>& sorted,
                                            Eigen::Index m) {
  std::vector<Eigen::Index> out;
  out.reserve(static_cast<std::size_t>(m) - sorted.size());
  std::size_t cursor = 0;
  for (Eigen::Index j = 0; j < m; ++j) {
    if (cursor < sorted.size() && sorted[cursor] == j) {
      ++cursor;
    } else {
      out.push_back(j);
    }
  }
  return out;
}

}  // namespace

void SparsityConfig::validate() const {
  if (M < 1 || N < 1 || T < 1 || L < 1) {
    throw std::invalid_argument("SparsityConfig: M, N, T, L must be positive");
  }
  if (N >= M) throw std::invalid_argument("SparsityConfig: requires N < M");
  if (T >= M) throw std::invalid_argument("SparsityConfig: requires T < M");
  if (s_c < 0 || S_common < 0) {
    throw std::invalid_argument("SparsityConfig: s_c and S_common must be non-negative");
  }
  // The smallest frame size s_bar - 3 must accommodate the smallest overlap
  // draw s_c; (overlap, size) pairs that exceed it are resampled internally.
  if (s_bar - 3 < s_c) {
    throw std::invalid_argument("SparsityConfig: requires s_bar - 3 >= s_c");
  }
  if (S_common > s_c) throw std::invalid_argument("SparsityConfig: requires S_common <= s_c");
  if (s_bar - 1 > M) throw std::invalid_argument("SparsityConfig: supports cannot exceed M");
}

KeyValueConfig SparsityConfig::to_kv() const {
  KeyValueConfig kv;
  kv.set_int("M", M);
  kv.set_int("N", N);
  kv.set_int("T", T);
  kv.set_int("L", L);
  kv.set_int("s_bar", s_bar);
  kv.set_int("s_c", s_c);
  kv.set_int("S_common", S_common);
  kv.set_double("snr_db", snr_db);
  return kv;
}

SparsityConfig SparsityConfig::from_kv(const KeyValueConfig& kv) {
  SparsityConfig cfg;
  cfg.M = kv.get_int("M");
  cfg.N = kv.get_int("N");
  cfg.T = kv.get_int("T");
  cfg.L = kv.get_int("L");
  cfg.s_bar = kv.get_int("s_bar");
  cfg.s_c = kv.get_int("s_c");
  cfg.S_common = kv.get_int("S_common");
  cfg.snr_db = kv.get_double("snr_db");
  cfg.validate();
  return cfg;
}

void SupportSequence::validate(const SparsityConfig& cfg) const {
  if (static_cast<Eigen::Index>(per_frame.size()) != cfg.L) {
    throw std::invalid_argument("SupportSequence: frame count mismatch");
  }
  if (static_cast<Eigen::Index>(common.size()) != cfg.S_common) {
    throw std::invalid_argument("SupportSequence: common set has wrong size");
  }
  for (Eigen::Index i = 0; i < cfg.L; ++i) {
    const auto& frame = per_frame[static_cast<std::size_t>(i)];
    const auto size = static_cast<Eigen::Index>(frame.size());
    if (size < cfg.s_bar - 3 || size > cfg.s_bar - 1) {
      throw std::invalid_argument("SupportSequence: frame size outside [s_bar-3, s_bar-1]");
    }
    if (!std::is_sorted(frame.begin(), frame.end()) ||
        std::adjacent_find(frame.begin(), frame.end()) != frame.end()) {
      throw std::invalid_argument("SupportSequence: frame support must be sorted and unique");
    }
    if (!frame.empty() && (frame.front() < 0 || frame.back() >= cfg.M)) {
      throw std::invalid_argument("SupportSequence: index outside [0, M)");
    }
    if (!is_subset(common, frame)) {
      throw std::invalid_argument("SupportSequence: common set not contained in a frame");
    }
    if (i > 0) {
      const Eigen::Index overlap = intersection_size(per_frame[static_cast<std::size_t>(i - 1)], frame);
      if (overlap < cfg.s_c || overlap > cfg.s_c + 1) {
        throw std::invalid_argument("SupportSequence: adjacent overlap outside [s_c, s_c+1]");
      }
    }
  }
}

Eigen::Index intersection_size(const std::vector<Eigen::Index>& a,
                               const std::vector<Eigen::Index>& b) {
  std::vector<Eigen::Index> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return static_cast<Eigen::Index>(out.size());
}

bool is_subset(const std::vector<Eigen::Index>& sub, const std::vector<Eigen::Index>& super) {
  return std::includes(super.begin(), super.end(), sub.begin(), sub.end());
}

SupportSequence sample_support_sequence(const SparsityConfig& cfg, std::mt19937_64& rng) {
  // Caller validates cfg; partially feasible draw combinations resample below.
  constexpr int kMaxRetries = 100;

  std::vector<Eigen::Index> all(static_cast<std::size_t>(cfg.M));
  for (Eigen::Index j = 0; j < cfg.M; ++j) all[static_cast<std::size_t>(j)] = j;

  auto draw_size = [&rng](Eigen::Index lo, Eigen::Index hi) {
    return std::uniform_int_distribution<Eigen::Index>(std::max<Eigen::Index>(0, lo), hi)(rng);
  };

  SupportSequence seq;
  seq.common = draw_without_replacement(all, cfg.S_common, rng);
  seq.per_frame.reserve(static_cast<std::size_t>(cfg.L));

  // First frame: common set plus uniform fresh indices up to the drawn size.
  {
    const Eigen::Index n1 = draw_size(cfg.s_bar - 3, cfg.s_bar - 1);
    if (n1 < cfg.S_common) {
      throw ConfigInfeasibleError(
          "sample_support_sequence: frame size cannot reach the common-support size");
    }
    auto frame = draw_without_replacement(complement_sorted(seq.common, cfg.M),
                                          n1 - cfg.S_common, rng);
    frame.insert(frame.end(), seq.common.begin(), seq.common.end());
    std::sort(frame.begin(), frame.end());
    seq.per_frame.push_back(std::move(frame));
  }

  for (Eigen::Index i = 1; i < cfg.L; ++i) {
    const auto& prev = seq.per_frame.back();
    const auto carry_pool = set_difference_sorted(prev, seq.common);
    const auto fresh_pool = complement_sorted(prev, cfg.M);

    bool done = false;
    for (int attempt = 0; attempt < kMaxRetries && !done; ++attempt) {
      const Eigen::Index k = draw_size(cfg.s_c, cfg.s_c + 1);
      const Eigen::Index n = draw_size(cfg.s_bar - 3, cfg.s_bar - 1);
      const Eigen::Index need_carry = k - cfg.S_common;
      const Eigen::Index need_fresh = n - k;
      if (need_carry < 0 || need_fresh < 0 ||
          need_carry > static_cast<Eigen::Index>(carry_pool.size()) ||
          need_fresh > static_cast<Eigen::Index>(fresh_pool.size())) {
        continue;  // resample (k, n) for this frame
      }
      auto frame = draw_without_replacement(carry_pool, need_carry, rng);
      const auto fresh = draw_without_replacement(fresh_pool, need_fresh, rng);
      frame.insert(frame.end(), fresh.begin(), fresh.end());
      frame.insert(frame.end(), seq.common.begin(), seq.common.end());
      std::sort(frame.begin(), frame.end());
      seq.per_frame.push_back(std::move(frame));
      done = true;
    }
    if (!done) {
      throw ConfigInfeasibleError(
          "sample_support_sequence: no feasible (overlap, size) draw after 100 attempts; "
          "the sparsity configuration leaves too few indices to extend frame " +
          std::to_string(i));
    }
  }

  seq.validate(cfg);
  return seq;
}

ComplexMatrix sample_channel(const SupportSequence& supports, const SparsityConfig& cfg,
                             std::mt19937_64& rng) {
  // Valid supports are the caller's precondition; any per_frame list is
  // honored as-is so degenerate sequences (e.g. all-empty) stay usable.
  ComplexMatrix g = ComplexMatrix::Zero(cfg.M, cfg.nl());
  std::normal_distribution<double> component(0.0, std::sqrt(0.5));
  const Eigen::Index frames =
      std::min<Eigen::Index>(cfg.L, static_cast<Eigen::Index>(supports.per_frame.size()));
  for (Eigen::Index i = 0; i < frames; ++i) {
    for (const Eigen::Index j : supports.per_frame[static_cast<std::size_t>(i)]) {
      for (Eigen::Index c = 0; c < cfg.N; ++c) {
        const double re = component(rng);
        const double im = component(rng);
        g(j, i * cfg.N + c) = std::complex<double>(re, im);
      }
    }
  }
  return g;
}

ComplexMatrix sample_pilot(const SparsityConfig& cfg, std::mt19937_64& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(cfg.M));
  std::uniform_real_distribution<double> component(-bound, bound);
  ComplexMatrix x(cfg.M, cfg.T);
  for (Eigen::Index r = 0; r < cfg.M; ++r) {
    for (Eigen::Index c = 0; c < cfg.T; ++c) {
      const double re = component(rng);
      const double im = component(rng);
      x(r, c) = std::complex<double>(re, im);
    }
  }
  return x;
}

LiftedMatrix measurement_operator(const ComplexMatrix& pilot, const ComplexMatrix& v_unitary) {
  if (v_unitary.rows() != v_unitary.cols()) {
    throw std::invalid_argument("measurement_operator: V must be square");
  }
  if (pilot.rows() != v_unitary.rows()) {
    throw std::invalid_argument("measurement_operator: pilot rows must match V");
  }
  return lift_operator(pilot.adjoint() * v_unitary);
}

Observation observe(const LiftedMatrix& phi, const ComplexMatrix& g, const SparsityConfig& cfg,
                    std::mt19937_64& rng) {
  if (phi.kind() != LiftKind::Operator) {
    throw std::invalid_argument("observe: phi must be an operator lift");
  }
  if (phi.complex_cols() != g.rows() || g.rows() != cfg.M || g.cols() != cfg.nl()) {
    throw std::invalid_argument("observe: dimension mismatch between phi, g, and config");
  }

  Observation obs;
  const LiftedMatrix g_bar = lift_signal(g);
  Eigen::MatrixXd r = phi.data() * g_bar.data();

  // Lifted and complex Frobenius norms of a signal agree, so this is the
  // empirical mean per-entry complex power of Phi*G.
  const double p_sig = r.squaredNorm() / static_cast<double>(phi.complex_rows() * cfg.nl());
  if (std::isinf(cfg.snr_db)) {
    obs.noise_var = 0.0;
  } else {
    obs.noise_var = p_sig * std::pow(10.0, -cfg.snr_db / 10.0);
  }
  if (obs.noise_var > 0.0) {
    std::normal_distribution<double> unit(0.0, 1.0);
    const double sigma = std::sqrt(obs.noise_var / 2.0);
    for (Eigen::Index i = 0; i < r.rows(); ++i) {
      for (Eigen::Index j = 0; j < r.cols(); ++j) {
        r(i, j) += sigma * unit(rng);
      }
    }
  }

  obs.r_bar = LiftedMatrix::adopt_signal(std::move(r));
  obs.z_frames = split_frames(obs.r_bar, cfg.N);
  return obs;
}

std::vector<LiftedMatrix> split_frames(const LiftedMatrix& sig, Eigen::Index frame_cols) {
  if (sig.kind() != LiftKind::Signal) {
    throw std::invalid_argument("split_frames: expected a signal lift");
  }
  if (frame_cols < 1 || sig.complex_cols() % frame_cols != 0) {
    throw std::invalid_argument("split_frames: columns not divisible into frames");
  }
  const Eigen::Index frames = sig.complex_cols() / frame_cols;
  std::vector<LiftedMatrix> out;
  out.reserve(static_cast<std::size_t>(frames));
  for (Eigen::Index i = 0; i < frames; ++i) {
    out.push_back(LiftedMatrix::adopt_signal(sig.data().middleCols(i * frame_cols, frame_cols)));
  }
  return out;
}

std::uint64_t split_seed(std::uint64_t master, std::uint64_t index) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace cfbss
