#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "cfbss/config.hpp"
#include "cfbss/metrics.hpp"

using namespace cfbss;

namespace {

LiftedMatrix signal_of(const ComplexMatrix& s) { return lift_signal(s); }

ComplexMatrix random_complex(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  ComplexMatrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m(i) = {n(rng), n(rng)};
  return m;
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("zero estimate scores 0 dB") {
  std::mt19937_64 rng(121);
  const ComplexMatrix g = random_complex(6, 3, rng);
  const NmseResult r = nmse({signal_of(g)}, {signal_of(ComplexMatrix::Zero(6, 3))});
  CHECK(r.nmse_db == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("a 10x norm reduction scores -10 dB per sample") {
  std::mt19937_64 rng(122);
  const ComplexMatrix g = random_complex(5, 2, rng);
  const ComplexMatrix est = g - 0.1 * g;  // error = 0.1 * truth
  const NmseResult r = nmse({signal_of(g)}, {signal_of(est)});
  CHECK(r.nmse_db == doctest::Approx(-10.0).epsilon(1e-10));
}

TEST_CASE("per-sample dB values average arithmetically") {
  std::mt19937_64 rng(123);
  const ComplexMatrix g = random_complex(4, 2, rng);
  const ComplexMatrix e10 = g - 0.1 * g;   // -10 dB
  const ComplexMatrix e20 = g - 0.01 * g;  // -20 dB
  const NmseResult r = nmse({signal_of(g), signal_of(g)}, {signal_of(e10), signal_of(e20)});
  CHECK(r.nmse_db == doctest::Approx(-15.0).epsilon(1e-9));
  REQUIRE(r.per_sample_db.size() == 2);
  CHECK(r.per_sample_db[0] == doctest::Approx(-10.0).epsilon(1e-9));
  CHECK(r.per_sample_db[1] == doctest::Approx(-20.0).epsilon(1e-9));
}

TEST_CASE("squared flag doubles the dB scale") {
  std::mt19937_64 rng(124);
  const ComplexMatrix g = random_complex(4, 2, rng);
  const ComplexMatrix est = g - 0.1 * g;
  const NmseResult r = nmse({signal_of(g)}, {signal_of(est)}, /*squared_ratio=*/true);
  CHECK(r.nmse_db == doctest::Approx(-20.0).epsilon(1e-9));
}

TEST_CASE("perfect recovery floors at -150 dB") {
  std::mt19937_64 rng(125);
  const ComplexMatrix g = random_complex(4, 2, rng);
  const NmseResult r = nmse({signal_of(g)}, {signal_of(g)});
  CHECK(r.nmse_db == -150.0);
  CHECK(r.perfect_recovery);
}

TEST_CASE("zero-norm truths are excluded and counted") {
  std::mt19937_64 rng(126);
  const ComplexMatrix g = random_complex(4, 2, rng);
  const ComplexMatrix zero = ComplexMatrix::Zero(4, 2);
  const NmseResult r =
      nmse({signal_of(g), signal_of(zero)}, {signal_of(g - 0.1 * g), signal_of(zero)});
  CHECK(r.excluded_zero_norm == 1);
  CHECK(r.nmse_db == doctest::Approx(-10.0).epsilon(1e-9));
  CHECK(std::isnan(r.per_sample_db[1]));

  CHECK_THROWS_AS(nmse({signal_of(zero)}, {signal_of(zero)}), std::invalid_argument);
  CHECK_THROWS_AS(nmse({signal_of(g)}, {}), std::invalid_argument);
}

TEST_CASE("physical channel frame is the transposed DFT image") {
  std::mt19937_64 rng(127);
  const Eigen::Index m = 8, n = 2;
  const ComplexMatrix g = random_complex(m, n, rng);
  const ComplexMatrix a_t = dft_unitary(m);
  const ComplexMatrix h = physical_channel_frame(lift_signal(g), a_t);
  REQUIRE(h.rows() == n);
  REQUIRE(h.cols() == m);
  const ComplexMatrix expect = (a_t * g).transpose();
  CHECK((h - expect).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("unit scalar channel with perfect recovery yields 1 bit") {
  ComplexMatrix h(1, 1);
  h(0, 0) = 1.0;
  const double value = ase({h}, -150.0, 1.0);
  CHECK(value == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("zero channel has zero spectral efficiency") {
  CHECK(ase({ComplexMatrix::Zero(2, 8)}, -20.0, 0.01) == 0.0);
}

TEST_CASE("ase is non-increasing in nmse for a fixed channel") {
  std::mt19937_64 rng(128);
  const ComplexMatrix h = random_complex(2, 8, rng);
  double prev = std::numeric_limits<double>::infinity();
  for (double db = -40.0; db <= 0.0 + 1e-9; db += 0.5) {
    const double v = ase({h}, db, 0.01);
    CHECK(v <= prev + 1e-12);
    prev = v;
  }
}

TEST_CASE("ase averages over frames") {
  std::mt19937_64 rng(129);
  const ComplexMatrix h1 = random_complex(2, 8, rng);
  const ComplexMatrix h2 = random_complex(2, 8, rng);
  const double a1 = ase({h1}, -20.0, 0.01);
  const double a2 = ase({h2}, -20.0, 0.01);
  const double both = ase({h1, h2}, -20.0, 0.01);
  CHECK(both == doctest::Approx(0.5 * (a1 + a2)).epsilon(1e-12));
}

TEST_CASE("metrics CSV round trips exactly") {
  std::vector<MetricRecord> recs(2);
  recs[0] = {"two_stage", 24, 30.0, -21.372819, 13.25, 0.004321, 500, 7, "a1b2c3d4e5f60718"};
  recs[1] = {"ista_l21", 24, 12.5, -14.0, 11.0, 1.25, 500, 7, "a1b2c3d4e5f60718"};
  const auto p = std::filesystem::temp_directory_path() / "cfbss_metrics_rt.csv";
  write_metrics_csv(recs, p);

  {
    std::ifstream in(p);
    std::string header;
    std::getline(in, header);
    CHECK(header == std::string(kMetricsCsvHeader));
  }

  const auto back = read_metrics_csv(p);
  REQUIRE(back.size() == 2);
  CHECK(back[0].scheme == "two_stage");
  CHECK(back[0].t == 24);
  CHECK(back[0].snr_db == 30.0);
  CHECK(back[0].nmse_db == recs[0].nmse_db);
  CHECK(back[0].ase_bits == recs[0].ase_bits);
  CHECK(back[0].wall_time_s == recs[0].wall_time_s);
  CHECK(back[0].sample_count == 500);
  CHECK(back[0].seed == 7);
  CHECK(back[1].config_digest == "a1b2c3d4e5f60718");
  std::filesystem::remove(p);
}

TEST_CASE("malformed CSV files raise IoError") {
  const auto p = std::filesystem::temp_directory_path() / "cfbss_metrics_bad.csv";
  {
    std::ofstream out(p);
    out << "wrong,header\n";
  }
  CHECK_THROWS_AS(read_metrics_csv(p), IoError);
  {
    std::ofstream out(p);
    out << kMetricsCsvHeader << "\n";
    out << "oracle,24,30,-20\n";  // too few fields
  }
  CHECK_THROWS_AS(read_metrics_csv(p), IoError);
  {
    std::ofstream out(p);
    out << kMetricsCsvHeader << "\n";
    out << "oracle,notanumber,30,-20,10,0.1,5,7,aa\n";
  }
  CHECK_THROWS_AS(read_metrics_csv(p), IoError);
  std::filesystem::remove(p);
  CHECK_THROWS_AS(read_metrics_csv(p), IoError);
}

}  // TEST_SUITE
