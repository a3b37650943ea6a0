#include "cfbss/sweep.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "cfbss/baselines.hpp"
#include "cfbss/config.hpp"

namespace cfbss {
namespace {

std::vector<LiftedMatrix> truths_of(const Dataset& ds) {
  std::vector<LiftedMatrix> out;
  out.reserve(ds.episodes.size());
  for (const auto& ep : ds.episodes) out.push_back(ep.g_bar);
  return out;
}

void require_artifact(const std::filesystem::path& p, const std::string& hint) {
  if (!std::filesystem::exists(p)) {
    throw IoError("missing artifact " + p.string() + "; generate it with: " + hint);
  }
}

void check_checkpoint_dims(const NetCheckpoint& ckpt, const SparsityConfig& cfg,
                           const std::filesystem::path& path) {
  const auto& layers = ckpt.is_fine() ? ckpt.fine.layers : ckpt.coarse.layers;
  if (layers.front().w.rows() != 2 * cfg.M || layers.front().w.cols() != 2 * cfg.T) {
    throw IoError("checkpoint " + path.string() +
                  " was trained for a different (M, T); retrain for this cell");
  }
}

NetCheckpoint load_checkpoint(const std::filesystem::path& cell, const std::string& file,
                              const std::string& expected_kind, const SparsityConfig& cfg,
                              const ExperimentPlan& plan) {
  const auto path = cell / file;
  require_artifact(path, "cfbss train --config " + plan.config_path + " --seed " +
                             std::to_string(plan.seed) + " --out " +
                             plan.artifact_root.string());
  NetCheckpoint ckpt = read_checkpoint(path);
  if (ckpt.kind != expected_kind) {
    throw IoError("checkpoint " + path.string() + " holds kind '" + ckpt.kind +
                  "', expected '" + expected_kind + "'");
  }
  check_checkpoint_dims(ckpt, cfg, path);
  return ckpt;
}

Dataset load_split(const std::filesystem::path& cell, const std::string& file,
                   const ExperimentPlan& plan) {
  const auto path = cell / file;
  require_artifact(path, "cfbss gen-data --config " + plan.config_path + " --seed " +
                             std::to_string(plan.seed) + " --out " +
                             plan.artifact_root.string());
  return read_dataset(path);
}

std::vector<LiftedMatrix> infer_ista_subset(const Dataset& ds, std::size_t count,
                                            const SolverConfig& cfg) {
  std::vector<LiftedMatrix> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(ista_l21_solve(ds.phi, ds.episodes[i].r_bar, cfg).estimate);
  }
  return out;
}

LiftedMatrix infer_wista_episode(const Dataset& ds, const EpisodeSample& ep,
                                 const SolverConfig& cfg) {
  Eigen::MatrixXd full(2 * ds.cfg.M, ds.cfg.nl());
  std::vector<Eigen::Index> prev;
  for (Eigen::Index i = 0; i < ep.frames; ++i) {
    const LiftedMatrix z = ep.z_frame(i);
    const LiftedMatrix est = i == 0 ? ista_l21_solve(ds.phi, z, cfg).estimate
                                    : ista_weighted_l21_solve(ds.phi, z, prev, cfg).estimate;
    full.middleCols(i * ep.n_rx, ep.n_rx) = est.data();
    prev = support_extract(est);
  }
  return LiftedMatrix::adopt_signal(std::move(full));
}

std::vector<LiftedMatrix> infer_wista_subset(const Dataset& ds, std::size_t count,
                                             const SolverConfig& cfg) {
  std::vector<LiftedMatrix> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(infer_wista_episode(ds, ds.episodes[i], cfg));
  }
  return out;
}

LiftedMatrix infer_oracle_episode(const Dataset& ds, const EpisodeSample& ep) {
  Eigen::MatrixXd full(2 * ds.cfg.M, ds.cfg.nl());
  for (Eigen::Index i = 0; i < ep.frames; ++i) {
    full.middleCols(i * ep.n_rx, ep.n_rx) =
        oracle_ls(ds.phi, ep.z_frame(i), ep.supports.per_frame[static_cast<std::size_t>(i)])
            .estimate.data();
  }
  return LiftedMatrix::adopt_signal(std::move(full));
}

// Grid-tunes the regularization weight on the leading validation episodes,
// minimizing validation NMSE under the given inference rule.
double tune_regularization(
    const Dataset& val, const EvalOptions& opt, bool squared,
    const std::function<std::vector<LiftedMatrix>(const Dataset&, std::size_t, double)>& infer) {
  const std::size_t count =
      std::min(static_cast<std::size_t>(opt.tuning_episodes), val.episodes.size());
  std::vector<LiftedMatrix> truths;
  truths.reserve(count);
  for (std::size_t i = 0; i < count; ++i) truths.push_back(val.episodes[i].g_bar);

  double best_alpha = 0.0;
  double best_nmse = std::numeric_limits<double>::infinity();
  for (const double alpha : ista_alpha_grid()) {
    const double value = nmse(truths, infer(val, count, alpha), squared).nmse_db;
    if (value < best_nmse) {
      best_nmse = value;
      best_alpha = alpha;
    }
  }
  return best_alpha;
}

double dataset_ase(const Dataset& test, const NmseResult& n, bool per_sample) {
  const ComplexMatrix a_t = dft_unitary(test.cfg.M);
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t e = 0; e < test.episodes.size(); ++e) {
    const EpisodeSample& ep = test.episodes[e];
    const double db = per_sample ? n.per_sample_db[e] : n.nmse_db;
    if (std::isnan(db)) continue;  // zero-norm truth excluded from the NMSE
    std::vector<ComplexMatrix> frames;
    frames.reserve(static_cast<std::size_t>(ep.frames));
    for (Eigen::Index i = 0; i < ep.frames; ++i) {
      frames.push_back(physical_channel_frame(ep.g_frame(i), a_t));
    }
    sum += ase(frames, db, ep.noise_var);
    ++counted;
  }
  if (counted == 0) throw std::invalid_argument("dataset_ase: no usable episodes");
  return sum / static_cast<double>(counted);
}

std::string format_axis_value(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

void ExperimentPlan::validate() const {
  if (axis != "T" && axis != "snr") {
    throw std::invalid_argument("ExperimentPlan: axis must be 'T' or 'snr'");
  }
  if (axis_values.empty()) throw std::invalid_argument("ExperimentPlan: empty axis");
  if (schemes.empty()) throw std::invalid_argument("ExperimentPlan: empty scheme list");
  for (const auto& s : schemes) {
    if (std::find(known_schemes().begin(), known_schemes().end(), s) == known_schemes().end()) {
      throw std::invalid_argument("ExperimentPlan: unknown scheme '" + s + "'");
    }
  }
  if (axis == "T") {
    for (const double v : axis_values) {
      if (v < 1.0 || v != std::floor(v)) {
        throw std::invalid_argument("ExperimentPlan: T axis values must be positive integers");
      }
    }
  }
  if (options.timing_reps < 1 || options.tuning_episodes < 1) {
    throw std::invalid_argument("ExperimentPlan: timing_reps and tuning_episodes must be >= 1");
  }
  base.validate();
}

std::string snr_token(double snr_db) {
  if (std::isinf(snr_db)) return "inf";
  std::ostringstream os;
  os << snr_db;
  return os.str();
}

std::filesystem::path cell_dir(const std::filesystem::path& root, const SparsityConfig& cell) {
  return root / ("T" + std::to_string(cell.T) + "_snr" + snr_token(cell.snr_db));
}

const std::vector<std::string>& known_schemes() {
  static const std::vector<std::string> schemes = {
      "two_stage", "coarse_only", "no_ss", "elementwise_ss", "ista_l21", "ista_wl21", "oracle"};
  return schemes;
}

std::vector<std::string> checkpoints_required(const std::string& scheme) {
  if (scheme == "two_stage") return {"coarse.cep", "fine.cep"};
  if (scheme == "coarse_only") return {"coarse.cep"};
  if (scheme == "no_ss") return {"no_ss.cep"};
  if (scheme == "elementwise_ss") return {"elementwise_ss.cep"};
  if (scheme == "ista_l21" || scheme == "ista_wl21" || scheme == "oracle") return {};
  throw std::invalid_argument("unknown scheme '" + scheme + "'");
}

TimedInference time_inference(const std::function<std::vector<LiftedMatrix>()>& infer, int reps) {
  if (reps < 1) throw std::invalid_argument("time_inference: reps must be >= 1");
  using clock = std::chrono::steady_clock;
  TimedInference out;
  std::vector<double> times;
  times.reserve(static_cast<std::size_t>(reps));

  const auto outer_start = clock::now();
  for (int r = 0; r < reps; ++r) {
    const auto t0 = clock::now();
    out.estimates = infer();
    const auto t1 = clock::now();
    times.push_back(std::chrono::duration<double>(t1 - t0).count());
  }
  const double outer = std::chrono::duration<double>(clock::now() - outer_start).count();

  const double inner_sum = std::accumulate(times.begin(), times.end(), 0.0);
  if (inner_sum > outer * (1.0 + 1e-9) + 1e-6) {
    throw std::runtime_error("time_inference: nested timers inconsistent (inner > outer)");
  }
  if (outer - inner_sum > std::max(0.25 * outer, 0.05)) {
    throw std::runtime_error(
        "time_inference: non-inference overhead dominates the timing window");
  }

  std::sort(times.begin(), times.end());
  const std::size_t mid = times.size() / 2;
  out.median_seconds =
      times.size() % 2 == 1 ? times[mid] : 0.5 * (times[mid - 1] + times[mid]);
  return out;
}

LayerErrorProfile per_layer_errors(const CoarseNetParams& coarse, const FineNetParams* fine,
                                   const Dataset& test, SelectionMode mode) {
  if (test.episodes.empty()) throw std::invalid_argument("per_layer_errors: empty dataset");
  LayerErrorProfile prof;
  prof.coarse.assign(coarse.layers.size(), 0.0);
  if (fine != nullptr) prof.fine.assign(fine->layers.size(), 0.0);

  for (const auto& ep : test.episodes) {
    const CoarseTrace tr = coarse_forward(coarse, test.phi, ep.r_bar, mode);
    for (std::size_t l = 0; l < tr.layers.size(); ++l) {
      prof.coarse[l] += (tr.layers[l].output - ep.g_bar.data()).norm();
    }
    if (fine != nullptr) {
      const FineTrace ft = fine_forward_episode(*fine, test.phi, split_frames(ep.r_bar, ep.n_rx),
                                                split_frames(tr.output(), ep.n_rx));
      for (std::size_t l = 0; l < fine->layers.size(); ++l) {
        double sq = 0.0;
        Eigen::Index col = 0;
        for (const auto& frame : ft.frames) {
          const auto& out = frame.layers[l].output;
          sq += (out - ep.g_bar.data().middleCols(col, out.cols())).squaredNorm();
          col += out.cols();
        }
        prof.fine[l] += std::sqrt(sq);
      }
    }
  }
  const double k = static_cast<double>(test.episodes.size());
  for (auto& v : prof.coarse) v /= k;
  for (auto& v : prof.fine) v /= k;
  return prof;
}

MetricRecord evaluate_scheme(const std::string& scheme, const Dataset& test,
                             const std::filesystem::path& cell, const ExperimentPlan& plan) {
  MetricRecord rec;
  rec.scheme = scheme;
  rec.t = test.cfg.T;
  rec.snr_db = test.cfg.snr_db;
  rec.sample_count = static_cast<std::int64_t>(test.episodes.size());
  rec.seed = plan.seed;
  rec.config_digest = plan.config_digest;

  const EvalOptions& opt = plan.options;
  std::function<std::vector<LiftedMatrix>()> infer;

  if (scheme == "two_stage") {
    const auto coarse = load_checkpoint(cell, "coarse.cep", "coarse", test.cfg, plan);
    const auto fine = load_checkpoint(cell, "fine.cep", "fine", test.cfg, plan);
    infer = [&test, coarse, fine]() {
      std::vector<LiftedMatrix> est;
      est.reserve(test.episodes.size());
      for (const auto& ep : test.episodes) {
        est.push_back(
            two_stage_forward(coarse.coarse, fine.fine, test.phi, ep.r_bar, ep.n_rx).estimate);
      }
      return est;
    };
  } else if (scheme == "coarse_only" || scheme == "no_ss" || scheme == "elementwise_ss") {
    const std::string kind = scheme == "coarse_only" ? "coarse" : scheme;
    const auto ckpt = load_checkpoint(cell, kind + ".cep", kind, test.cfg, plan);
    const SelectionMode mode = selection_mode_for_kind(kind);
    infer = [&test, ckpt, mode]() {
      std::vector<LiftedMatrix> est;
      est.reserve(test.episodes.size());
      for (const auto& ep : test.episodes) {
        est.push_back(coarse_forward(ckpt.coarse, test.phi, ep.r_bar, mode).output());
      }
      return est;
    };
  } else if (scheme == "ista_l21" || scheme == "ista_wl21") {
    const Dataset val = load_split(cell, "val.ced", plan);
    SolverConfig solver;
    solver.tol = opt.ista_tol;
    solver.max_iters = opt.ista_max_iters;
    solver.omega_fixed = 0.5;
    if (scheme == "ista_l21") {
      solver.alpha = tune_regularization(
          val, opt, opt.squared_nmse,
          [&solver](const Dataset& ds, std::size_t count, double alpha) {
            SolverConfig c = solver;
            c.alpha = alpha;
            return infer_ista_subset(ds, count, c);
          });
      infer = [&test, solver]() { return infer_ista_subset(test, test.episodes.size(), solver); };
    } else {
      // The chained weighted solve is costlier; tune on a smaller slice.
      EvalOptions tuning = opt;
      tuning.tuning_episodes = std::min(opt.tuning_episodes, 12);
      const double reg = tune_regularization(
          val, tuning, opt.squared_nmse,
          [&solver](const Dataset& ds, std::size_t count, double alpha) {
            SolverConfig c = solver;
            c.alpha = alpha;
            c.lambda = alpha;
            return infer_wista_subset(ds, count, c);
          });
      solver.alpha = reg;
      solver.lambda = reg;
      infer = [&test, solver]() { return infer_wista_subset(test, test.episodes.size(), solver); };
    }
  } else if (scheme == "oracle") {
    infer = [&test]() {
      std::vector<LiftedMatrix> est;
      est.reserve(test.episodes.size());
      for (const auto& ep : test.episodes) est.push_back(infer_oracle_episode(test, ep));
      return est;
    };
  } else {
    throw std::invalid_argument("evaluate_scheme: unknown scheme '" + scheme + "'");
  }

  const TimedInference timed = time_inference(infer, opt.timing_reps);
  const NmseResult n = nmse(truths_of(test), timed.estimates, opt.squared_nmse);
  rec.nmse_db = n.nmse_db;
  rec.ase_bits = dataset_ase(test, n, opt.per_sample_ase);
  rec.wall_time_s = timed.median_seconds;
  return rec;
}

SweepOutcome run_sweep(const ExperimentPlan& plan, const std::filesystem::path& out_dir) {
  plan.validate();
  std::filesystem::create_directories(out_dir);

  SweepOutcome outcome;
  for (const double v : plan.axis_values) {
    SparsityConfig cell = plan.base;
    if (plan.axis == "T") {
      cell.T = static_cast<Eigen::Index>(v);
    } else {
      cell.snr_db = v;
    }
    cell.validate();
    const auto dir = cell_dir(plan.artifact_root, cell);
    const Dataset test = load_split(dir, "test.ced", plan);
    if (test.cfg.M != cell.M || test.cfg.N != cell.N || test.cfg.T != cell.T ||
        test.cfg.L != cell.L || test.cfg.snr_db != cell.snr_db) {
      throw IoError("dataset " + (dir / "test.ced").string() +
                    " does not match the planned cell configuration; regenerate it");
    }
    for (const auto& scheme : plan.schemes) {
      outcome.records.push_back(evaluate_scheme(scheme, test, dir, plan));
    }
  }

  const auto csv_path = out_dir / "results.csv";
  write_metrics_csv(outcome.records, csv_path);
  outcome.emitted.push_back(csv_path);

  {
    KeyValueConfig meta;
    meta.set("axis", plan.axis);
    std::ostringstream vals;
    for (std::size_t i = 0; i < plan.axis_values.size(); ++i) {
      if (i > 0) vals << ',';
      vals << format_axis_value(plan.axis_values[i]);
    }
    meta.set("axis_values", vals.str());
    std::ostringstream schemes;
    for (std::size_t i = 0; i < plan.schemes.size(); ++i) {
      if (i > 0) schemes << ',';
      schemes << plan.schemes[i];
    }
    meta.set("schemes", schemes.str());
    meta.set_int("seed", static_cast<std::int64_t>(plan.seed));
    meta.set("config_digest", plan.config_digest);
    const auto meta_path = out_dir / "results.meta";
    std::ofstream out(meta_path);
    if (!out) throw IoError("cannot write " + meta_path.string());
    out << "# sweep summary; cells carry base parameters below\n";
    out << meta.to_line() << "\n";
    out << "base " << plan.base.to_kv().to_line() << "\n";
    outcome.emitted.push_back(meta_path);
  }

  for (const auto& p : emit_dat_series(outcome.records, out_dir)) outcome.emitted.push_back(p);
  return outcome;
}

std::string render_table(const std::vector<MetricRecord>& records) {
  const std::vector<std::string> header = {"scheme",      "T",  "snr_db", "nmse_db",      "ase",
                                           "wall_time_s", "K",  "seed",   "config_digest"};
  std::vector<std::vector<std::string>> rows;
  rows.push_back(header);
  for (const auto& r : records) {
    std::ostringstream snr, nm, as, wt;
    snr << r.snr_db;
    nm << std::fixed << std::setprecision(3) << r.nmse_db;
    as << std::fixed << std::setprecision(3) << r.ase_bits;
    wt << std::fixed << std::setprecision(6) << r.wall_time_s;
    rows.push_back({r.scheme, std::to_string(r.t), snr.str(), nm.str(), as.str(), wt.str(),
                    std::to_string(r.sample_count), std::to_string(r.seed), r.config_digest});
  }
  std::vector<std::size_t> width(header.size(), 0);
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream os;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      os << std::left << std::setw(static_cast<int>(width[c]) + 2) << row[c];
    }
    os << "\n";
  }
  return os.str();
}

std::vector<std::filesystem::path> emit_dat_series(const std::vector<MetricRecord>& records,
                                                   const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::set<std::int64_t> t_values;
  for (const auto& r : records) t_values.insert(r.t);
  const bool axis_is_t = t_values.size() > 1;

  std::vector<std::string> scheme_order;
  for (const auto& r : records) {
    if (std::find(scheme_order.begin(), scheme_order.end(), r.scheme) == scheme_order.end()) {
      scheme_order.push_back(r.scheme);
    }
  }

  std::vector<std::filesystem::path> emitted;
  const std::vector<std::pair<std::string, std::function<double(const MetricRecord&)>>> metrics =
      {{"nmse", [](const MetricRecord& r) { return r.nmse_db; }},
       {"ase", [](const MetricRecord& r) { return r.ase_bits; }},
       {"time", [](const MetricRecord& r) { return r.wall_time_s; }}};

  for (const auto& scheme : scheme_order) {
    for (const auto& [metric, get] : metrics) {
      std::vector<std::pair<double, double>> series;
      for (const auto& r : records) {
        if (r.scheme != scheme) continue;
        series.emplace_back(axis_is_t ? static_cast<double>(r.t) : r.snr_db, get(r));
      }
      std::stable_sort(series.begin(), series.end(),
                       [](const auto& a, const auto& b) { return a.first < b.first; });
      const auto path = out_dir / (metric + "_" + scheme + ".dat");
      std::ofstream out(path);
      if (!out) throw IoError("cannot write " + path.string());
      out << "# " << (axis_is_t ? "T" : "snr_db") << " " << metric << " scheme=" << scheme
          << "\n";
      out.precision(12);
      for (const auto& [x, y] : series) out << x << " " << y << "\n";
      emitted.push_back(path);
    }
  }
  return emitted;
}

}  // namespace cfbss
