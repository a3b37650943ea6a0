// Acceptance harness: prints one [PASS]/[FAIL] line per criterion and exits
// nonzero when any criterion fails. Heavy desk-scale artifacts are built once
// under ./acceptance_scratch; set CFBSS_ACCEPTANCE_REUSE=1 to keep artifacts
// from a previous run when iterating locally.
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cfbss/baselines.hpp"
#include "cfbss/channel.hpp"
#include "cfbss/config.hpp"
#include "cfbss/dataset.hpp"
#include "cfbss/lift.hpp"
#include "cfbss/metrics.hpp"
#include "cfbss/nets.hpp"
#include "cfbss/shrinkage.hpp"
#include "cfbss/sweep.hpp"
#include "cfbss/train.hpp"

using namespace cfbss;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

void report(int idx, const std::string& name, bool ok, const std::string& detail) {
  std::cout << (ok ? "[PASS]" : "[FAIL]") << " criterion " << idx << ": " << name;
  if (!detail.empty()) std::cout << " (" << detail << ")";
  std::cout << std::endl;
  if (!ok) ++failures;
}

template <typename Fn>
void guarded(int idx, const std::string& name, Fn&& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    report(idx, name, false, std::string("exception: ") + e.what());
  }
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

ComplexMatrix random_complex(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  ComplexMatrix m(rows, cols);
  for (Eigen::Index j = 0; j < m.size(); ++j) m(j) = {gauss(rng), gauss(rng)};
  return m;
}

// ---------------------------------------------------------------- criterion 1

void criterion_lifting() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(1001);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::Index p = 2 + static_cast<Eigen::Index>(rng() % 7);
    const Eigen::Index q = 2 + static_cast<Eigen::Index>(rng() % 7);
    const Eigen::Index c = 1 + static_cast<Eigen::Index>(rng() % 6);
    const ComplexMatrix a = random_complex(p, q, rng);
    const ComplexMatrix b = random_complex(q, q, rng);
    const ComplexMatrix s = random_complex(q, c, rng);

    worst = std::max(worst, (unlift_operator(lift_operator(a)) - a).norm());
    worst = std::max(worst, (unlift_signal(lift_signal(s)) - s).norm());
    worst = std::max(
        worst, (lift_operator(a).data() * lift_signal(s).data() - lift_signal(a * s).data())
                   .norm());
    worst = std::max(
        worst,
        (lift_operator(a).data() * lift_operator(b).data() - lift_operator(a * b).data())
            .norm());
    worst = std::max(worst, std::abs(lift_signal(s).data().norm() - s.norm()));
    worst = std::max(
        worst, std::abs(lift_operator(a).data().norm() - std::sqrt(2.0) * a.norm()));
  }
  const double elapsed = seconds_since(t0);
  const bool ok = worst < 1e-10 && elapsed < 5.0;
  report(1, "lifting algebra on 1000 random pairs", ok,
         "max deviation " + fmt(worst) + ", " + fmt(elapsed) + " s");
}

// ---------------------------------------------------------------- criterion 2

void criterion_shrinkage() {
  std::string detail;
  bool ok = true;

  // Pinned unit examples (exact).
  {
    Eigen::MatrixXd v(2, 1);
    v << 3.0, 4.0;  // group norm 5
    const Eigen::MatrixXd shrunk = bss_apply(v, 2.5, {0});
    ok = ok && shrunk(0, 0) == 1.5 && shrunk(1, 0) == 2.0;
    const Eigen::MatrixXd kept = bss_apply(v, 2.5, {1});
    ok = ok && kept(0, 0) == 3.0 && kept(1, 0) == 4.0;
    const Eigen::MatrixXd zeroed = bss_apply(v, 5.0, {0});
    ok = ok && zeroed(0, 0) == 0.0 && zeroed(1, 0) == 0.0;
    // A selected group at or below theta is zeroed by the written branch order.
    const Eigen::MatrixXd sel_zero = bss_apply(v, 5.0, {1});
    ok = ok && sel_zero(0, 0) == 0.0 && sel_zero(1, 0) == 0.0;
    if (!ok) detail = "unit examples diverged";
  }

  // gbss with unit weights is bitwise bss; bss with empty selection is the prox.
  std::mt19937_64 rng(1002);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 2.0);
  double prox_diff = 0.0;
  int bit_mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Eigen::Index m = 1 + static_cast<Eigen::Index>(rng() % 8);
    const Eigen::Index c = 1 + static_cast<Eigen::Index>(rng() % 4);
    Eigen::MatrixXd v(2 * m, c);
    for (Eigen::Index j = 0; j < v.size(); ++j) v(j) = gauss(rng);
    const double theta = unif(rng);
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(m));
    for (auto& bit : mask) bit = static_cast<std::uint8_t>(rng() % 2);

    const Eigen::MatrixXd gb = gbss_apply(v, theta, GroupWeights::uniform(m), mask);
    const Eigen::MatrixXd bs = bss_apply(v, theta, mask);
    if (!(gb.array() == bs.array()).all()) ++bit_mismatches;

    const Eigen::MatrixXd unselected =
        bss_apply(v, theta, std::vector<std::uint8_t>(static_cast<std::size_t>(m), 0));
    const Eigen::MatrixXd prox =
        prox_group_l21(LiftedMatrix::adopt_signal(v), theta).data();
    prox_diff = std::max(prox_diff, (unselected - prox).lpNorm<Eigen::Infinity>());
  }
  ok = ok && bit_mismatches == 0 && prox_diff <= 1e-12;
  if (detail.empty()) {
    detail = "bitwise mismatches " + std::to_string(bit_mismatches) + ", prox diff " +
             fmt(prox_diff);
  }
  report(2, "shrinkage kernels", ok, detail);
}

// ---------------------------------------------------------------- criterion 3

void criterion_gradcheck() {
  const auto t0 = Clock::now();
  SparsityConfig cfg;
  cfg.M = 8;
  cfg.N = 2;
  cfg.T = 6;
  cfg.L = 2;
  cfg.s_bar = 4;
  cfg.s_c = 1;
  cfg.S_common = 1;
  cfg.snr_db = 20.0;
  cfg.validate();

  const Dataset ds = build_dataset(cfg, 1, 1003);
  const LiftedMatrix& phi = ds.phi;
  const LiftedMatrix& r_bar = ds.episodes[0].r_bar;
  const LiftedMatrix& g_bar = ds.episodes[0].g_bar;
  const std::vector<LiftedMatrix> calib = {r_bar};

  const SupportSchedule cs = make_coarse_schedule(cfg, 2);
  const SupportSchedule fsch = make_fine_schedule(cfg, 2);
  const CoarseNetParams coarse = init_coarse_params(phi, 2, cs.p_min, cs.p_max, calib);
  const FineNetParams fine = init_fine_params(phi, 2, fsch.p_min, fsch.p_max, calib);

  const GradcheckReport rc =
      gradcheck_coarse(coarse, phi, r_bar, g_bar, SelectionMode::Grouped);
  const CoarseTrace trace = coarse_forward(coarse, phi, r_bar, SelectionMode::Grouped);
  const std::vector<LiftedMatrix> coarse_frames =
      split_frames(LiftedMatrix::adopt_signal(trace.layers.back().output), cfg.N);
  const GradcheckReport rf =
      gradcheck_fine(fine, phi, split_frames(r_bar, cfg.N), coarse_frames, g_bar);

  const double elapsed = seconds_since(t0);
  const bool ok = rc.passed && rf.passed && elapsed < 60.0;
  report(3, "gradient audit on 2-layer nets", ok,
         "coarse max_rel " + fmt(rc.max_rel_error) + ", fine max_rel " +
             fmt(rf.max_rel_error) + ", " + fmt(elapsed) + " s");
}

// ---------------------------------------------------------------- criterion 4

void criterion_ista_kkt() {
  std::mt19937_64 rng(1004);
  std::uniform_real_distribution<double> alpha_draw(0.05, 0.5);
  double worst_kkt = 0.0;
  int monotone_violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index m = 4 + static_cast<Eigen::Index>(rng() % 5);
    const Eigen::Index t = 3 + static_cast<Eigen::Index>(rng() % 4);
    const Eigen::Index c = 1 + static_cast<Eigen::Index>(rng() % 3);
    const LiftedMatrix phi = lift_operator(random_complex(t, m, rng));
    const LiftedMatrix r = lift_signal(random_complex(t, c, rng));

    SolverConfig cfg;
    cfg.alpha = alpha_draw(rng);
    cfg.tol = 1e-10;
    cfg.max_iters = 50000;
    const IstaResult res = ista_l21_solve(phi, r, cfg);
    worst_kkt = std::max(worst_kkt, kkt_residual_l21(phi, r, res.estimate, cfg.alpha));
    for (std::size_t i = 1; i < res.objective_history.size(); ++i) {
      const double prev = res.objective_history[i - 1];
      if (res.objective_history[i] > prev + 1e-9 * (1.0 + std::abs(prev))) {
        ++monotone_violations;
      }
    }
  }
  const bool ok = worst_kkt < 1e-4 && monotone_violations == 0;
  report(4, "ista solver KKT oracle on 100 instances", ok,
         "worst KKT " + fmt(worst_kkt) + ", monotonicity violations " +
             std::to_string(monotone_violations));
}

// ---------------------------------------------------------------- criterion 5

void criterion_support_statistics() {
  SparsityConfig cfg;
  cfg.M = 128;
  cfg.N = 2;
  cfg.T = 33;
  cfg.L = 7;
  cfg.s_bar = 15;
  cfg.s_c = 10;
  cfg.S_common = 8;
  cfg.validate();

  constexpr int kDraws = 10000;
  std::mt19937_64 rng(1005);
  int violations = 0;
  std::vector<int> first_frame_hits(static_cast<std::size_t>(cfg.M), 0);
  for (int d = 0; d < kDraws; ++d) {
    const SupportSequence seq = sample_support_sequence(cfg, rng);
    try {
      seq.validate(cfg);
    } catch (const std::exception&) {
      ++violations;
      continue;
    }
    for (const Eigen::Index j : seq.per_frame.front()) {
      ++first_frame_hits[static_cast<std::size_t>(j)];
    }
  }

  // E|first frame| = s_bar - 2; by symmetry each column is included with
  // probability p = (s_bar - 2) / M.
  const double p = static_cast<double>(cfg.s_bar - 2) / static_cast<double>(cfg.M);
  const double sigma = std::sqrt(p * (1.0 - p) / kDraws);
  int out_of_band = 0;
  double worst_dev = 0.0;
  for (const int hits : first_frame_hits) {
    const double dev = std::abs(static_cast<double>(hits) / kDraws - p);
    worst_dev = std::max(worst_dev, dev);
    if (dev > 3.0 * sigma) ++out_of_band;
  }
  const bool ok = violations == 0 && out_of_band == 0;
  report(5, "support sequence statistics on 10000 draws", ok,
         "invariant violations " + std::to_string(violations) + ", columns outside 3-sigma " +
             std::to_string(out_of_band) + ", worst |dev| " + fmt(worst_dev) + " vs band " +
             fmt(3.0 * sigma));
}

// ------------------------------------------------------- desk-scale artifacts

struct DeskBundle {
  fs::path root;
  SparsityConfig main_cfg;
  std::vector<SparsityConfig> trend_cells;  // T=16, T=32, snr=10, snr=20
  ExperimentPlan plan;
  double setup_seconds = 0.0;
  std::string error;  // nonempty -> setup failed

  std::map<std::string, MetricRecord> record_cache;
  std::map<std::string, Dataset> test_cache;
};

constexpr std::uint64_t kDeskSeed = 2026;
constexpr int kCoarseLayers = 6;
constexpr int kFineLayers = 10;

SparsityConfig desk_config() {
  SparsityConfig cfg;
  cfg.M = 64;
  cfg.N = 2;
  cfg.T = 24;
  cfg.L = 7;
  cfg.s_bar = 8;
  cfg.s_c = 5;
  cfg.S_common = 3;
  cfg.snr_db = 30.0;
  cfg.validate();
  return cfg;
}

void ensure_datasets(const fs::path& dir, const SparsityConfig& cell, Eigen::Index k_train,
                     Eigen::Index k_val, Eigen::Index k_test, bool reuse) {
  fs::create_directories(dir);
  const struct {
    const char* name;
    Eigen::Index count;
    std::uint64_t offset;
  } splits[] = {
      {"train.ced", k_train, 0},
      {"val.ced", k_val, static_cast<std::uint64_t>(k_train)},
      {"test.ced", k_test, static_cast<std::uint64_t>(k_train + k_val)},
  };
  for (const auto& split : splits) {
    const fs::path path = dir / split.name;
    if (reuse && fs::exists(path)) continue;
    std::cerr << "  building " << path.string() << " (" << split.count << " episodes)\n";
    write_dataset(build_dataset(cell, split.count, kDeskSeed, split.offset), path);
  }
}

void ensure_net(const fs::path& dir, const char* file, bool reuse,
                const std::function<TrainResult()>& train_fn) {
  const fs::path path = dir / file;
  if (reuse && fs::exists(path)) return;
  std::cerr << "  training " << path.string() << "\n";
  const auto t0 = Clock::now();
  const TrainResult res = train_fn();
  write_checkpoint(res.checkpoint, path);
  std::cerr << "    steps=" << res.total_steps << " final_val=" << res.final_val_loss
            << " health=" << (res.health_ok ? "ok" : "clamped") << " "
            << fmt(seconds_since(t0)) << " s\n";
}

DeskBundle build_desk() {
  DeskBundle b;
  b.root = fs::current_path() / "acceptance_scratch";
  b.main_cfg = desk_config();
  for (const Eigen::Index t : {16, 32}) {
    SparsityConfig cell = b.main_cfg;
    cell.T = t;
    b.trend_cells.push_back(cell);
  }
  for (const double snr : {10.0, 20.0}) {
    SparsityConfig cell = b.main_cfg;
    cell.snr_db = snr;
    b.trend_cells.push_back(cell);
  }

  b.plan.axis = "T";
  b.plan.axis_values = {static_cast<double>(b.main_cfg.T)};
  b.plan.base = b.main_cfg;
  b.plan.schemes = {"two_stage", "coarse_only", "no_ss", "elementwise_ss", "ista_l21"};
  b.plan.artifact_root = b.root;
  b.plan.seed = kDeskSeed;
  b.plan.config_digest = fnv1a_hex(b.main_cfg.to_kv().to_line());
  b.plan.options.timing_reps = 3;
  b.plan.options.tuning_episodes = 50;

  const char* reuse_env = std::getenv("CFBSS_ACCEPTANCE_REUSE");
  const bool reuse = reuse_env != nullptr && std::string(reuse_env) == "1";
  const auto t0 = Clock::now();
  try {
    if (!reuse) fs::remove_all(b.root);
    fs::create_directories(b.root);

    TrainConfig tc;
    tc.train_batch = 32;
    tc.val_batch = 50;
    tc.layerwise_steps_per_stage = 50;
    tc.max_epochs_per_stage = 10;
    tc.patience = 3;
    tc.seed = kDeskSeed;
    tc.validate();

    // Main cell: all four nets at the pinned corpus sizes.
    {
      const fs::path dir = cell_dir(b.root, b.main_cfg);
      ensure_datasets(dir, b.main_cfg, 2000, 500, 500, reuse);
      const Dataset train_ds = read_dataset(dir / "train.ced");
      const Dataset val_ds = read_dataset(dir / "val.ced");
      CoarseNetParams frozen;
      ensure_net(dir, "coarse.cep", reuse, [&] {
        return train_coarse(train_ds, val_ds, tc, SelectionMode::Grouped, kCoarseLayers);
      });
      frozen = read_checkpoint(dir / "coarse.cep").coarse;
      ensure_net(dir, "fine.cep", reuse,
                 [&] { return train_fine(train_ds, val_ds, tc, frozen, kFineLayers); });
      ensure_net(dir, "no_ss.cep", reuse, [&] {
        return train_coarse(train_ds, val_ds, tc, SelectionMode::None, kCoarseLayers);
      });
      ensure_net(dir, "elementwise_ss.cep", reuse, [&] {
        return train_coarse(train_ds, val_ds, tc, SelectionMode::Elementwise, kCoarseLayers);
      });
    }

    // Trend cells: the two-stage pair only, smaller corpora.
    for (const SparsityConfig& cell : b.trend_cells) {
      const fs::path dir = cell_dir(b.root, cell);
      ensure_datasets(dir, cell, 1200, 300, 300, reuse);
      const Dataset train_ds = read_dataset(dir / "train.ced");
      const Dataset val_ds = read_dataset(dir / "val.ced");
      CoarseNetParams frozen;
      ensure_net(dir, "coarse.cep", reuse, [&] {
        return train_coarse(train_ds, val_ds, tc, SelectionMode::Grouped, kCoarseLayers);
      });
      frozen = read_checkpoint(dir / "coarse.cep").coarse;
      ensure_net(dir, "fine.cep", reuse,
                 [&] { return train_fine(train_ds, val_ds, tc, frozen, kFineLayers); });
    }
  } catch (const std::exception& e) {
    b.error = e.what();
  }
  b.setup_seconds = seconds_since(t0);
  std::cerr << "desk-scale setup took " << fmt(b.setup_seconds) << " s\n";
  return b;
}

DeskBundle& desk() {
  static DeskBundle b = build_desk();
  return b;
}

const Dataset& test_split(DeskBundle& b, const SparsityConfig& cell) {
  const std::string key = cell_dir(b.root, cell).string();
  auto it = b.test_cache.find(key);
  if (it == b.test_cache.end()) {
    it = b.test_cache.emplace(key, read_dataset(cell_dir(b.root, cell) / "test.ced")).first;
  }
  return it->second;
}

const MetricRecord& eval_at(DeskBundle& b, const SparsityConfig& cell,
                            const std::string& scheme) {
  const fs::path dir = cell_dir(b.root, cell);
  const std::string key = dir.string() + "/" + scheme;
  auto it = b.record_cache.find(key);
  if (it == b.record_cache.end()) {
    std::cerr << "  evaluating " << scheme << " at " << dir.filename().string() << "\n";
    it = b.record_cache.emplace(key, evaluate_scheme(scheme, test_split(b, cell), dir, b.plan))
             .first;
  }
  return it->second;
}

// ---------------------------------------------------------------- criterion 6

void criterion_learning_benefit() {
  DeskBundle& b = desk();
  if (!b.error.empty()) {
    report(6, "desk-scale learning benefit", false, "setup failed: " + b.error);
    return;
  }
  const auto t0 = Clock::now();

  // Untrained two-stage forward, initialized exactly as training starts.
  const fs::path dir = cell_dir(b.root, b.main_cfg);
  const Dataset train_ds = read_dataset(dir / "train.ced");
  std::vector<LiftedMatrix> calib;
  for (std::size_t i = 0; i < std::min<std::size_t>(32, train_ds.episodes.size()); ++i) {
    calib.push_back(train_ds.episodes[i].r_bar);
  }
  const SupportSchedule cs = make_coarse_schedule(b.main_cfg, kCoarseLayers);
  const SupportSchedule fsch = make_fine_schedule(b.main_cfg, kFineLayers);
  const CoarseNetParams init_coarse =
      init_coarse_params(train_ds.phi, kCoarseLayers, cs.p_min, cs.p_max, calib);
  const FineNetParams init_fine =
      init_fine_params(train_ds.phi, kFineLayers, fsch.p_min, fsch.p_max, calib);

  const Dataset& test_ds = test_split(b, b.main_cfg);
  std::vector<LiftedMatrix> truths, init_est;
  truths.reserve(test_ds.episodes.size());
  init_est.reserve(test_ds.episodes.size());
  for (const EpisodeSample& ep : test_ds.episodes) {
    truths.push_back(ep.g_bar);
    init_est.push_back(
        two_stage_forward(init_coarse, init_fine, test_ds.phi, ep.r_bar, test_ds.cfg.N)
            .estimate);
  }
  const double init_nmse = nmse(truths, init_est).nmse_db;

  const MetricRecord& trained = eval_at(b, b.main_cfg, "two_stage");
  const MetricRecord& ista = eval_at(b, b.main_cfg, "ista_l21");

  const double gain_db = init_nmse - trained.nmse_db;
  const double budget = b.setup_seconds + seconds_since(t0);
  const bool ok = gain_db >= 10.0 && trained.nmse_db <= ista.nmse_db && budget < 7200.0;
  report(6, "desk-scale learning benefit", ok,
         "init " + fmt(init_nmse) + " dB, trained " + fmt(trained.nmse_db) + " dB (gain " +
             fmt(gain_db) + " dB), tuned ista " + fmt(ista.nmse_db) + " dB, runtime " +
             fmt(budget) + " s");
}

// ---------------------------------------------------------------- criterion 7

void criterion_ablation_ordering() {
  DeskBundle& b = desk();
  if (!b.error.empty()) {
    report(7, "ablation ordering", false, "setup failed: " + b.error);
    return;
  }
  const MetricRecord& ts = eval_at(b, b.main_cfg, "two_stage");
  const MetricRecord& co = eval_at(b, b.main_cfg, "coarse_only");
  const MetricRecord& ns = eval_at(b, b.main_cfg, "no_ss");
  const MetricRecord& ew = eval_at(b, b.main_cfg, "elementwise_ss");

  const bool nmse_ok = ts.nmse_db < co.nmse_db && co.nmse_db < ns.nmse_db &&
                       co.nmse_db < ew.nmse_db;
  const bool ase_ok =
      ts.ase_bits > co.ase_bits && co.ase_bits > ns.ase_bits && co.ase_bits > ew.ase_bits;
  report(7, "ablation ordering (nmse and ase)", nmse_ok && ase_ok,
         "nmse dB: two_stage " + fmt(ts.nmse_db) + " < coarse_only " + fmt(co.nmse_db) +
             " < {no_ss " + fmt(ns.nmse_db) + ", elementwise " + fmt(ew.nmse_db) +
             "}; ase: " + fmt(ts.ase_bits) + " > " + fmt(co.ase_bits) + " > {" +
             fmt(ns.ase_bits) + ", " + fmt(ew.ase_bits) + "}");
}

// ---------------------------------------------------------------- criterion 8

void criterion_trends() {
  DeskBundle& b = desk();
  if (!b.error.empty()) {
    report(8, "trend reproduction", false, "setup failed: " + b.error);
    return;
  }
  const double n16 = eval_at(b, b.trend_cells[0], "two_stage").nmse_db;
  const double n24 = eval_at(b, b.main_cfg, "two_stage").nmse_db;
  const double n32 = eval_at(b, b.trend_cells[1], "two_stage").nmse_db;
  const double s10 = eval_at(b, b.trend_cells[2], "two_stage").nmse_db;
  const double s20 = eval_at(b, b.trend_cells[3], "two_stage").nmse_db;
  const double s30 = n24;

  const bool t_ok = n16 > n24 && n24 > n32;
  const bool snr_ok = s10 > s20 && s20 > s30;
  report(8, "nmse trends along T and SNR", t_ok && snr_ok,
         "T {16,24,32} -> {" + fmt(n16) + ", " + fmt(n24) + ", " + fmt(n32) +
             "} dB; SNR {10,20,30} -> {" + fmt(s10) + ", " + fmt(s20) + ", " + fmt(s30) +
             "} dB");
}

// ---------------------------------------------------------------- criterion 9

void criterion_timing() {
  DeskBundle& b = desk();
  if (!b.error.empty()) {
    report(9, "timing ordering", false, "setup failed: " + b.error);
    return;
  }
  const MetricRecord& ts = eval_at(b, b.main_cfg, "two_stage");
  const MetricRecord& ista = eval_at(b, b.main_cfg, "ista_l21");
  const bool ok = ts.wall_time_s < ista.wall_time_s;
  report(9, "two-stage inference faster than ista", ok,
         "two_stage " + fmt(ts.wall_time_s) + " s vs ista " + fmt(ista.wall_time_s) + " s");
}

// --------------------------------------------------------------- criterion 10

void criterion_layer_decay() {
  DeskBundle& b = desk();
  if (!b.error.empty()) {
    report(10, "per-layer error decay", false, "setup failed: " + b.error);
    return;
  }
  const fs::path dir = cell_dir(b.root, b.main_cfg);
  const NetCheckpoint coarse = read_checkpoint(dir / "coarse.cep");
  const NetCheckpoint fine = read_checkpoint(dir / "fine.cep");
  const LayerErrorProfile profile =
      per_layer_errors(coarse.coarse, &fine.fine, test_split(b, b.main_cfg),
                       SelectionMode::Grouped);
  const bool ok = !profile.coarse.empty() && !profile.fine.empty() &&
                  profile.coarse.back() < profile.coarse.front() &&
                  profile.fine.back() < profile.fine.front();
  report(10, "per-layer error decay in both nets", ok,
         "coarse " + fmt(profile.coarse.front()) + " -> " + fmt(profile.coarse.back()) +
             ", fine " + fmt(profile.fine.front()) + " -> " + fmt(profile.fine.back()));
}

}  // namespace

int main() {
  std::cout << "acceptance harness\n";
  guarded(1, "lifting algebra on 1000 random pairs", criterion_lifting);
  guarded(2, "shrinkage kernels", criterion_shrinkage);
  guarded(3, "gradient audit on 2-layer nets", criterion_gradcheck);
  guarded(4, "ista solver KKT oracle on 100 instances", criterion_ista_kkt);
  guarded(5, "support sequence statistics on 10000 draws", criterion_support_statistics);
  guarded(6, "desk-scale learning benefit", criterion_learning_benefit);
  guarded(7, "ablation ordering (nmse and ase)", criterion_ablation_ordering);
  guarded(8, "nmse trends along T and SNR", criterion_trends);
  guarded(9, "two-stage inference faster than ista", criterion_timing);
  guarded(10, "per-layer error decay in both nets", criterion_layer_decay);

  if (failures == 0) {
    std::cout << "all criteria passed" << std::endl;
  } else {
    std::cout << failures << " criteria failed" << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
