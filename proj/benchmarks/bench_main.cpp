// Microbenchmarks for the inference-critical kernels at desk scale
// (M=64, N=2, T=24, L=7).
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "cfbss/baselines.hpp"
#include "cfbss/channel.hpp"
#include "cfbss/dataset.hpp"
#include "cfbss/nets.hpp"
#include "cfbss/shrinkage.hpp"

using namespace cfbss;

namespace {

SparsityConfig bench_config() {
  SparsityConfig cfg;
  cfg.M = 64;
  cfg.N = 2;
  cfg.T = 24;
  cfg.L = 7;
  cfg.s_bar = 8;
  cfg.s_c = 5;
  cfg.S_common = 3;
  cfg.snr_db = 30.0;
  return cfg;
}

struct BenchFixture {
  SparsityConfig cfg = bench_config();
  Dataset ds = build_dataset(cfg, 4, 99);
  CoarseNetParams coarse;
  FineNetParams fine;

  BenchFixture() {
    std::vector<LiftedMatrix> calib;
    for (const EpisodeSample& ep : ds.episodes) calib.push_back(ep.r_bar);
    const SupportSchedule cs = make_coarse_schedule(cfg, 6);
    const SupportSchedule fs = make_fine_schedule(cfg, 10);
    coarse = init_coarse_params(ds.phi, 6, cs.p_min, cs.p_max, calib);
    fine = init_fine_params(ds.phi, 10, fs.p_min, fs.p_max, calib);
  }
};

BenchFixture& fixture() {
  static BenchFixture f;
  return f;
}

void BM_GbssApply(benchmark::State& state) {
  BenchFixture& f = fixture();
  const Eigen::MatrixXd pre = f.ds.phi.data().transpose() * f.ds.episodes[0].r_bar.data();
  const GroupWeights w = GroupWeights::uniform(f.cfg.M);
  const std::vector<std::uint8_t> mask(static_cast<std::size_t>(f.cfg.M), 0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(gbss_apply(pre, 0.1, w, mask));
  }
}
BENCHMARK(BM_GbssApply);

void BM_CoarseForward(benchmark::State& state) {
  BenchFixture& f = fixture();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        coarse_forward(f.coarse, f.ds.phi, f.ds.episodes[0].r_bar, SelectionMode::Grouped));
  }
}
BENCHMARK(BM_CoarseForward);

void BM_TwoStageForward(benchmark::State& state) {
  BenchFixture& f = fixture();
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        two_stage_forward(f.coarse, f.fine, f.ds.phi, f.ds.episodes[0].r_bar, f.cfg.N));
  }
}
BENCHMARK(BM_TwoStageForward);

void BM_IstaSolve(benchmark::State& state) {
  BenchFixture& f = fixture();
  SolverConfig cfg;
  cfg.alpha = 0.1;
  cfg.tol = 1e-4;
  cfg.max_iters = 4000;
  for (auto _ : state) {
    benchmark::DoNotOptimize(ista_l21_solve(f.ds.phi, f.ds.episodes[0].r_bar, cfg));
  }
}
BENCHMARK(BM_IstaSolve);

}  // namespace

BENCHMARK_MAIN();
