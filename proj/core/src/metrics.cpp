#include "cfbss/metrics.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "cfbss/config.hpp"

namespace cfbss {
namespace {

constexpr double kPerfectRecoveryFloorDb = -150.0;

std::string double_field(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (const char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

const char* const kMetricsCsvHeader = "scheme,T,snr_db,nmse_db,ase,wall_time_s,K,seed,config_digest";

NmseResult nmse(const std::vector<LiftedMatrix>& truths,
                const std::vector<LiftedMatrix>& estimates, bool squared_ratio) {
  if (truths.empty() || truths.size() != estimates.size()) {
    throw std::invalid_argument("nmse: need matching, non-empty truth/estimate sets");
  }
  NmseResult res;
  res.per_sample_db.assign(truths.size(), std::numeric_limits<double>::quiet_NaN());
  double sum = 0.0;
  int used = 0;
  for (std::size_t i = 0; i < truths.size(); ++i) {
    if (truths[i].data().rows() != estimates[i].data().rows() ||
        truths[i].data().cols() != estimates[i].data().cols()) {
      throw std::invalid_argument("nmse: sample shape mismatch");
    }
    const double truth_norm = truths[i].data().norm();
    if (truth_norm == 0.0) {
      ++res.excluded_zero_norm;
      continue;
    }
    const double ratio = (estimates[i].data() - truths[i].data()).norm() / truth_norm;
    double db;
    if (ratio == 0.0) {
      db = kPerfectRecoveryFloorDb;
      res.perfect_recovery = true;
    } else {
      db = (squared_ratio ? 20.0 : 10.0) * std::log10(ratio);
      if (db < kPerfectRecoveryFloorDb) {
        db = kPerfectRecoveryFloorDb;
        res.perfect_recovery = true;
      }
    }
    res.per_sample_db[i] = db;
    sum += db;
    ++used;
  }
  if (used == 0) throw std::invalid_argument("nmse: every truth sample has zero norm");
  res.nmse_db = sum / static_cast<double>(used);
  return res;
}

ComplexMatrix physical_channel_frame(const LiftedMatrix& g_frame, const ComplexMatrix& a_t) {
  if (g_frame.kind() != LiftKind::Signal) {
    throw std::invalid_argument("physical_channel_frame: expected a signal lift");
  }
  if (a_t.rows() != a_t.cols() || a_t.cols() != g_frame.complex_rows()) {
    throw std::invalid_argument("physical_channel_frame: steering matrix must be M x M");
  }
  return (a_t * unlift_signal(g_frame)).transpose();
}

double ase(const std::vector<ComplexMatrix>& channel_frames, double nmse_db, double noise_var) {
  if (channel_frames.empty()) throw std::invalid_argument("ase: need at least one frame");
  if (noise_var < 0.0) throw std::invalid_argument("ase: negative noise variance");

  const Eigen::Index n = channel_frames.front().rows();
  const Eigen::Index m = channel_frames.front().cols();
  const double denom = std::pow(10.0, nmse_db / 10.0) + noise_var;
  if (denom <= 0.0) throw std::invalid_argument("ase: non-positive SNR denominator");
  const double c = static_cast<double>(m * n) / denom;

  double sum = 0.0;
  for (const auto& h : channel_frames) {
    if (h.rows() != n || h.cols() != m) {
      throw std::invalid_argument("ase: inconsistent frame shapes");
    }
    ComplexMatrix a = ComplexMatrix::Identity(n, n) + c * (h * h.adjoint());
    a = 0.5 * (a + a.adjoint());  // guard the eigensolve against rounding asymmetry
    Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(a, Eigen::EigenvaluesOnly);
    double log2det = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      log2det += std::log2(std::max(es.eigenvalues()(i), std::numeric_limits<double>::min()));
    }
    sum += log2det;
  }
  return sum / static_cast<double>(channel_frames.size());
}

void write_metrics_csv(const std::vector<MetricRecord>& records,
                       const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open csv for writing: " + path.string());
  out << kMetricsCsvHeader << "\n";
  for (const auto& r : records) {
    out << r.scheme << ',' << r.t << ',' << double_field(r.snr_db) << ','
        << double_field(r.nmse_db) << ',' << double_field(r.ase_bits) << ','
        << double_field(r.wall_time_s) << ',' << r.sample_count << ',' << r.seed << ','
        << r.config_digest << "\n";
  }
  if (!out) throw IoError("failed writing csv: " + path.string());
}

std::vector<MetricRecord> read_metrics_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open csv: " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kMetricsCsvHeader) {
    throw IoError("csv header mismatch in " + path.string());
  }
  std::vector<MetricRecord> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 9) throw IoError("malformed csv row in " + path.string());
    MetricRecord r;
    try {
      r.scheme = f[0];
      r.t = std::stoll(f[1]);
      r.snr_db = std::stod(f[2]);
      r.nmse_db = std::stod(f[3]);
      r.ase_bits = std::stod(f[4]);
      r.wall_time_s = std::stod(f[5]);
      r.sample_count = std::stoll(f[6]);
      r.seed = static_cast<std::uint64_t>(std::stoull(f[7]));
      r.config_digest = f[8];
    } catch (const std::exception&) {
      throw IoError("unparseable csv field in " + path.string());
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace cfbss
