#include "cfbss/dataset.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

#include "cfbss/config.hpp"

namespace cfbss {
namespace {

static_assert(std::endian::native == std::endian::little,
              "the .ced/.cep container formats are little-endian");

void write_u64(std::ostream& out, std::uint64_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

std::uint64_t read_u64(std::istream& in, const std::filesystem::path& path) {
  std::uint64_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof(v));
  if (!in) throw IoError("truncated block header in " + path.string());
  return v;
}

std::vector<Eigen::Index> indices_from_row(const Eigen::MatrixXd& row,
                                           const std::filesystem::path& path) {
  if (row.rows() != 1) throw IoError("support block must have one row in " + path.string());
  std::vector<Eigen::Index> out(static_cast<std::size_t>(row.cols()));
  for (Eigen::Index i = 0; i < row.cols(); ++i) {
    const double v = row(0, i);
    if (v < 0.0 || v != std::floor(v)) {
      throw IoError("support block holds a non-index value in " + path.string());
    }
    out[static_cast<std::size_t>(i)] = static_cast<Eigen::Index>(v);
  }
  return out;
}

Eigen::MatrixXd row_from_indices(const std::vector<Eigen::Index>& idx) {
  Eigen::MatrixXd row(1, static_cast<Eigen::Index>(idx.size()));
  for (std::size_t i = 0; i < idx.size(); ++i) {
    row(0, static_cast<Eigen::Index>(i)) = static_cast<double>(idx[i]);
  }
  return row;
}

}  // namespace

void write_block(std::ostream& out, const Eigen::MatrixXd& m) {
  write_u64(out, static_cast<std::uint64_t>(m.rows()));
  write_u64(out, static_cast<std::uint64_t>(m.cols()));
  std::vector<double> buf(static_cast<std::size_t>(m.size()));
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) buf[k++] = m(r, c);
  }
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(double)));
}

Eigen::MatrixXd read_block(std::istream& in, const std::filesystem::path& path) {
  const auto rows = read_u64(in, path);
  const auto cols = read_u64(in, path);
  constexpr std::uint64_t kMaxDim = 1ull << 32;
  if (rows > kMaxDim || cols > kMaxDim) {
    throw IoError("implausible block dimensions in " + path.string());
  }
  std::vector<double> buf(static_cast<std::size_t>(rows * cols));
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(buf.size() * sizeof(double)));
  if (!in) throw IoError("truncated block payload in " + path.string());
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = buf[k++];
  }
  return m;
}

LiftedMatrix EpisodeSample::z_frame(Eigen::Index i) const {
  if (i < 0 || i >= frames) throw std::out_of_range("EpisodeSample::z_frame: frame index");
  return LiftedMatrix::adopt_signal(r_bar.data().middleCols(i * n_rx, n_rx));
}

LiftedMatrix EpisodeSample::g_frame(Eigen::Index i) const {
  if (i < 0 || i >= frames) throw std::out_of_range("EpisodeSample::g_frame: frame index");
  return LiftedMatrix::adopt_signal(g_bar.data().middleCols(i * n_rx, n_rx));
}

Dataset build_dataset(const SparsityConfig& cfg, Eigen::Index count, std::uint64_t seed,
                      std::uint64_t episode_offset) {
  cfg.validate();
  if (count < 1) throw std::invalid_argument("build_dataset: count must be positive");

  Dataset ds;
  ds.cfg = cfg;
  ds.seed = seed;

  std::mt19937_64 pilot_rng(split_seed(seed, 0));
  const ComplexMatrix pilot = sample_pilot(cfg, pilot_rng);
  ds.phi = measurement_operator(pilot, dft_unitary(cfg.M));

  ds.episodes.reserve(static_cast<std::size_t>(count));
  for (Eigen::Index e = 0; e < count; ++e) {
    std::mt19937_64 rng(split_seed(seed, episode_offset + static_cast<std::uint64_t>(e) + 1));
    EpisodeSample ep;
    ep.supports = sample_support_sequence(cfg, rng);
    const ComplexMatrix g = sample_channel(ep.supports, cfg, rng);
    Observation obs = observe(ds.phi, g, cfg, rng);
    ep.g_bar = lift_signal(g);
    ep.r_bar = std::move(obs.r_bar);
    ep.noise_var = obs.noise_var;
    ep.frames = cfg.L;
    ep.n_rx = cfg.N;
    ds.episodes.push_back(std::move(ep));
  }
  return ds;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open dataset for writing: " + path.string());

  KeyValueConfig kv = ds.cfg.to_kv();
  kv.set_int("K", static_cast<std::int64_t>(ds.episodes.size()));
  kv.set_int("seed", static_cast<std::int64_t>(ds.seed));
  out << "CED1 " << kv.to_line() << "\n";

  write_block(out, ds.phi.data());
  for (const auto& ep : ds.episodes) {
    write_block(out, ep.g_bar.data());
    write_block(out, ep.r_bar.data());
    write_block(out, row_from_indices(ep.supports.common));
    for (const auto& frame : ep.supports.per_frame) write_block(out, row_from_indices(frame));
    write_block(out, Eigen::MatrixXd::Constant(1, 1, ep.noise_var));
  }
  if (!out) throw IoError("failed writing dataset: " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset: " + path.string());

  std::string header;
  if (!std::getline(in, header)) throw IoError("missing dataset header in " + path.string());
  if (header.rfind("CED1 ", 0) != 0) {
    throw IoError("not a CED1 dataset: " + path.string());
  }
  const KeyValueConfig kv = KeyValueConfig::parse(header.substr(5));

  Dataset ds;
  ds.cfg = SparsityConfig::from_kv(kv);
  ds.seed = static_cast<std::uint64_t>(kv.get_int("seed"));
  const Eigen::Index count = kv.get_int("K");
  if (count < 0) throw IoError("negative episode count in " + path.string());

  try {
    ds.phi = LiftedMatrix::adopt_operator(read_block(in, path));
  } catch (const std::invalid_argument& e) {
    throw IoError("corrupt phi block in " + path.string() + ": " + e.what());
  }
  if (ds.phi.complex_rows() != ds.cfg.T || ds.phi.complex_cols() != ds.cfg.M) {
    throw IoError("phi dimensions disagree with header in " + path.string());
  }

  ds.episodes.reserve(static_cast<std::size_t>(count));
  for (Eigen::Index e = 0; e < count; ++e) {
    EpisodeSample ep;
    try {
      ep.g_bar = LiftedMatrix::adopt_signal(read_block(in, path));
      ep.r_bar = LiftedMatrix::adopt_signal(read_block(in, path));
    } catch (const std::invalid_argument& err) {
      throw IoError("corrupt episode block in " + path.string() + ": " + err.what());
    }
    if (ep.g_bar.complex_rows() != ds.cfg.M || ep.g_bar.complex_cols() != ds.cfg.nl() ||
        ep.r_bar.complex_rows() != ds.cfg.T || ep.r_bar.complex_cols() != ds.cfg.nl()) {
      throw IoError("episode dimensions disagree with header in " + path.string());
    }
    ep.supports.common = indices_from_row(read_block(in, path), path);
    ep.supports.per_frame.resize(static_cast<std::size_t>(ds.cfg.L));
    for (Eigen::Index i = 0; i < ds.cfg.L; ++i) {
      ep.supports.per_frame[static_cast<std::size_t>(i)] =
          indices_from_row(read_block(in, path), path);
    }
    try {
      ep.supports.validate(ds.cfg);
    } catch (const std::invalid_argument& err) {
      throw IoError("invalid support sequence in " + path.string() + ": " + err.what());
    }
    const Eigen::MatrixXd nv = read_block(in, path);
    if (nv.rows() != 1 || nv.cols() != 1 || nv(0, 0) < 0.0) {
      throw IoError("invalid noise variance block in " + path.string());
    }
    ep.noise_var = nv(0, 0);
    ep.frames = ds.cfg.L;
    ep.n_rx = ds.cfg.N;
    ds.episodes.push_back(std::move(ep));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw IoError("trailing bytes after final episode in " + path.string());
  }
  return ds;
}

}  // namespace cfbss
