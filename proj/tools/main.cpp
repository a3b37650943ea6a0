// cfbss: dataset generation, training, and benchmarking for the two-stage
// compressive channel estimator. Exit codes: 0 success, 1 experiment
// failure, 2 usage error.
#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cfbss/baselines.hpp"
#include "cfbss/channel.hpp"
#include "cfbss/config.hpp"
#include "cfbss/dataset.hpp"
#include "cfbss/metrics.hpp"
#include "cfbss/nets.hpp"
#include "cfbss/sweep.hpp"
#include "cfbss/train.hpp"

namespace fs = std::filesystem;
using namespace cfbss;

namespace {

struct CliState {
  std::uint64_t seed = 0;
  std::string config_path;
  std::string out_dir = "out";
  std::vector<std::string> axis_tokens;  // {"T"|"snr", "v1,v2,..."}
  bool nmse_squared = false;
  bool per_sample_ase = false;
  bool inject_fault = false;
  std::string report_csv;
};

KeyValueConfig load_config(const CliState& st) {
  if (st.config_path.empty()) return {};
  return KeyValueConfig::load(st.config_path);
}

std::string config_digest(const CliState& st, const SparsityConfig& base) {
  if (!st.config_path.empty()) return fnv1a_hex_file(st.config_path);
  return fnv1a_hex(base.to_kv().to_line());
}

SparsityConfig scenario_from(const KeyValueConfig& kv) {
  SparsityConfig cfg;  // struct defaults back any key the config omits
  cfg.M = kv.get_int_or("M", cfg.M);
  cfg.N = kv.get_int_or("N", cfg.N);
  cfg.T = kv.get_int_or("T", cfg.T);
  cfg.L = kv.get_int_or("L", cfg.L);
  cfg.s_bar = kv.get_int_or("s_bar", cfg.s_bar);
  cfg.s_c = kv.get_int_or("s_c", cfg.s_c);
  cfg.S_common = kv.get_int_or("S_common", cfg.S_common);
  cfg.snr_db = kv.get_double_or("snr_db", cfg.snr_db);
  cfg.validate();
  return cfg;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string token;
  std::istringstream in(text);
  while (std::getline(in, token, ',')) {
    if (!token.empty()) out.push_back(token);
  }
  return out;
}

std::vector<double> parse_values(const std::string& text) {
  std::vector<double> out;
  for (const std::string& tok : split_list(text)) {
    try {
      std::size_t used = 0;
      const double v = std::stod(tok, &used);
      if (used != tok.size()) throw std::invalid_argument(tok);
      out.push_back(v);
    } catch (const std::exception&) {
      throw std::invalid_argument("axis value is not a number: " + tok);
    }
  }
  if (out.empty()) throw std::invalid_argument("axis value list is empty");
  return out;
}

// CLI --axis wins over config axis/axis_values; default is the single base cell.
void resolve_axis(const CliState& st, const KeyValueConfig& kv, const SparsityConfig& base,
                  std::string& axis, std::vector<double>& values) {
  if (!st.axis_tokens.empty()) {
    axis = st.axis_tokens[0];
    values = parse_values(st.axis_tokens[1]);
    return;
  }
  if (kv.has("axis")) {
    axis = kv.get("axis");
    values = parse_values(kv.get("axis_values"));
    return;
  }
  axis = "T";
  values = {static_cast<double>(base.T)};
}

std::vector<std::string> schemes_from(const KeyValueConfig& kv) {
  const std::string fallback = "two_stage,coarse_only,no_ss,elementwise_ss,ista_l21";
  return split_list(kv.get_or("schemes", fallback));
}

SparsityConfig cell_config(const SparsityConfig& base, const std::string& axis, double value) {
  SparsityConfig cell = base;
  if (axis == "T") {
    cell.T = static_cast<Eigen::Index>(value);
  } else if (axis == "snr") {
    cell.snr_db = value;
  } else {
    throw std::invalid_argument("axis must be T or snr, got: " + axis);
  }
  cell.validate();
  return cell;
}

TrainConfig train_config_from(const KeyValueConfig& kv, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.learning_rate = kv.get_double_or("learning_rate", cfg.learning_rate);
  cfg.refine_lr = kv.get_double_or("refine_lr", cfg.refine_lr);
  cfg.train_batch = static_cast<int>(kv.get_int_or("train_batch", cfg.train_batch));
  cfg.val_batch = static_cast<int>(kv.get_int_or("val_batch", cfg.val_batch));
  cfg.layerwise_steps_per_stage =
      static_cast<int>(kv.get_int_or("steps_per_stage", cfg.layerwise_steps_per_stage));
  cfg.max_epochs_per_stage =
      static_cast<int>(kv.get_int_or("max_epochs", cfg.max_epochs_per_stage));
  cfg.patience = static_cast<int>(kv.get_int_or("patience", cfg.patience));
  cfg.seed = seed;
  cfg.validate();
  return cfg;
}

EvalOptions eval_options_from(const CliState& st, const KeyValueConfig& kv) {
  EvalOptions opt;
  opt.squared_nmse = st.nmse_squared;
  opt.per_sample_ase = st.per_sample_ase;
  opt.ista_tol = kv.get_double_or("ista_tol", opt.ista_tol);
  opt.ista_max_iters = static_cast<int>(kv.get_int_or("ista_max_iters", opt.ista_max_iters));
  opt.timing_reps = static_cast<int>(kv.get_int_or("timing_reps", opt.timing_reps));
  opt.tuning_episodes =
      static_cast<int>(kv.get_int_or("tuning_episodes", opt.tuning_episodes));
  return opt;
}

ExperimentPlan plan_from(const CliState& st, const KeyValueConfig& kv) {
  ExperimentPlan plan;
  plan.base = scenario_from(kv);
  resolve_axis(st, kv, plan.base, plan.axis, plan.axis_values);
  plan.schemes = schemes_from(kv);
  plan.artifact_root = st.out_dir;
  plan.seed = st.seed;
  plan.config_digest = config_digest(st, plan.base);
  plan.config_path = st.config_path.empty() ? "<config>" : st.config_path;
  plan.options = eval_options_from(st, kv);
  plan.validate();
  return plan;
}

std::string gen_hint(const CliState& st) {
  const std::string cfg = st.config_path.empty() ? "<config>" : st.config_path;
  return "cfbss gen-data --config " + cfg + " --seed " + std::to_string(st.seed) + " --out " +
         st.out_dir;
}

int run_gen_data(const CliState& st) {
  const KeyValueConfig kv = load_config(st);
  const SparsityConfig base = scenario_from(kv);
  std::string axis;
  std::vector<double> values;
  resolve_axis(st, kv, base, axis, values);

  const Eigen::Index k_train = kv.get_int_or("k_train", 2000);
  const Eigen::Index k_val = kv.get_int_or("k_val", 500);
  const Eigen::Index k_test = kv.get_int_or("k_test", 500);

  for (const double value : values) {
    const SparsityConfig cell = cell_config(base, axis, value);
    const fs::path dir = cell_dir(st.out_dir, cell);
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
      const Dataset ds = build_dataset(cell, split.count, st.seed, split.offset);
      const fs::path path = dir / split.name;
      write_dataset(ds, path);
      std::cout << "wrote " << path.string() << " episodes=" << split.count
                << " digest=" << fnv1a_hex_file(path) << '\n';
    }

    KeyValueConfig cell_kv = cell.to_kv();
    cell_kv.set_int("k_train", k_train);
    cell_kv.set_int("k_val", k_val);
    cell_kv.set_int("k_test", k_test);
    cell_kv.set_int("seed", static_cast<std::int64_t>(st.seed));
    std::ofstream out(dir / "cell.cfg");
    out << cell_kv.to_line() << '\n';
    if (!out) throw IoError("cannot write " + (dir / "cell.cfg").string());
  }
  return 0;
}

Dataset load_split(const fs::path& path, const SparsityConfig& cell, const CliState& st) {
  if (!fs::exists(path)) {
    throw IoError("missing artifact " + path.string() + "; generate it with: " + gen_hint(st));
  }
  Dataset ds = read_dataset(path);
  if (ds.cfg.to_kv().to_line() != cell.to_kv().to_line()) {
    throw IoError("dataset " + path.string() +
                  " does not match the requested cell; regenerate with: " + gen_hint(st));
  }
  return ds;
}

int run_train(const CliState& st) {
  const KeyValueConfig kv = load_config(st);
  const SparsityConfig base = scenario_from(kv);
  std::string axis;
  std::vector<double> values;
  resolve_axis(st, kv, base, axis, values);
  const std::vector<std::string> schemes = schemes_from(kv);
  const TrainConfig tcfg = train_config_from(kv, st.seed);
  const int coarse_layers = static_cast<int>(kv.get_int_or("coarse_layers", 6));
  const int fine_layers = static_cast<int>(kv.get_int_or("fine_layers", 10));

  std::vector<std::string> needed;
  for (const std::string& scheme : schemes) {
    for (const std::string& file : checkpoints_required(scheme)) {
      if (std::find(needed.begin(), needed.end(), file) == needed.end()) needed.push_back(file);
    }
  }

  for (const double value : values) {
    const SparsityConfig cell = cell_config(base, axis, value);
    const fs::path dir = cell_dir(st.out_dir, cell);
    const Dataset train_ds = load_split(dir / "train.ced", cell, st);
    const Dataset val_ds = load_split(dir / "val.ced", cell, st);

    const auto emit = [&](const TrainResult& res, const std::string& file) {
      write_checkpoint(res.checkpoint, dir / file);
      std::cout << "trained " << res.checkpoint.kind << " -> " << (dir / file).string()
                << " steps=" << res.total_steps << " final_val=" << res.final_val_loss
                << " health=" << (res.health_ok ? "ok" : "clamped") << '\n';
    };

    CoarseNetParams frozen;
    bool have_coarse = false;
    const bool want_fine =
        std::find(needed.begin(), needed.end(), "fine.cep") != needed.end();
    if (want_fine ||
        std::find(needed.begin(), needed.end(), "coarse.cep") != needed.end()) {
      const TrainResult res =
          train_coarse(train_ds, val_ds, tcfg, SelectionMode::Grouped, coarse_layers);
      frozen = res.checkpoint.coarse;
      have_coarse = true;
      emit(res, "coarse.cep");
    }
    if (want_fine) {
      if (!have_coarse) throw TrainingError("fine training requires the coarse net");
      emit(train_fine(train_ds, val_ds, tcfg, frozen, fine_layers), "fine.cep");
    }
    if (std::find(needed.begin(), needed.end(), "no_ss.cep") != needed.end()) {
      emit(train_coarse(train_ds, val_ds, tcfg, SelectionMode::None, coarse_layers),
           "no_ss.cep");
    }
    if (std::find(needed.begin(), needed.end(), "elementwise_ss.cep") != needed.end()) {
      emit(train_coarse(train_ds, val_ds, tcfg, SelectionMode::Elementwise, coarse_layers),
           "elementwise_ss.cep");
    }
  }
  return 0;
}

int run_gradcheck(const CliState& st) {
  const KeyValueConfig kv = load_config(st);
  SparsityConfig cfg;
  cfg.M = kv.get_int_or("M", 8);
  cfg.N = kv.get_int_or("N", 2);
  cfg.T = kv.get_int_or("T", 6);
  cfg.L = kv.get_int_or("L", 2);
  cfg.s_bar = kv.get_int_or("s_bar", 4);
  cfg.s_c = kv.get_int_or("s_c", 1);
  cfg.S_common = kv.get_int_or("S_common", 1);
  cfg.snr_db = kv.get_double_or("snr_db", 20.0);
  cfg.validate();
  const int layers = static_cast<int>(kv.get_int_or("gradcheck_layers", 2));

  const Dataset ds = build_dataset(cfg, 1, st.seed);
  const LiftedMatrix& phi = ds.phi;
  const LiftedMatrix& r_bar = ds.episodes[0].r_bar;
  const LiftedMatrix& g_bar = ds.episodes[0].g_bar;
  const std::vector<LiftedMatrix> calib = {r_bar};

  const Eigen::Index cp_min = std::max<Eigen::Index>(0, cfg.S_common - 2);
  const Eigen::Index cp_max = std::min<Eigen::Index>(cfg.M, cfg.S_common + 2);
  CoarseNetParams coarse = init_coarse_params(phi, layers, cp_min, cp_max, calib);
  FineNetParams fine = init_fine_params(phi, layers, cfg.s_c, cfg.s_bar, calib);

  bool all_passed = true;
  const auto show = [&](const char* label, const GradcheckReport& rep) {
    std::cout << label << " max_rel=" << rep.max_rel_error << " checked=" << rep.checked_points
              << " excluded=" << rep.excluded_points << (rep.passed ? " pass" : " FAIL")
              << '\n';
    all_passed = all_passed && rep.passed;
  };

  show("coarse[grouped]", gradcheck_coarse(coarse, phi, r_bar, g_bar, SelectionMode::Grouped,
                                           1e-5, st.inject_fault));
  show("coarse[none]", gradcheck_coarse(coarse, phi, r_bar, g_bar, SelectionMode::None, 1e-5,
                                        st.inject_fault));
  show("coarse[elementwise]", gradcheck_coarse(coarse, phi, r_bar, g_bar,
                                               SelectionMode::Elementwise, 1e-5,
                                               st.inject_fault));

  const CoarseTrace trace = coarse_forward(coarse, phi, r_bar, SelectionMode::Grouped);
  const std::vector<LiftedMatrix> coarse_frames =
      split_frames(LiftedMatrix::adopt_signal(trace.layers.back().output), cfg.N);
  const std::vector<LiftedMatrix> z_frames = split_frames(r_bar, cfg.N);
  show("fine", gradcheck_fine(fine, phi, z_frames, coarse_frames, g_bar, 1e-5,
                              st.inject_fault));

  if (!all_passed) throw TrainingError("gradient check failed");
  return 0;
}

int run_eval_or_sweep(const CliState& st) {
  const KeyValueConfig kv = load_config(st);
  const ExperimentPlan plan = plan_from(st, kv);
  const SweepOutcome outcome = run_sweep(plan, st.out_dir);
  std::cout << render_table(outcome.records);
  for (const fs::path& path : outcome.emitted) {
    std::cout << "emitted " << path.string() << '\n';
  }
  return 0;
}

int run_report(const CliState& st) {
  const std::vector<MetricRecord> records = read_metrics_csv(st.report_csv);
  std::cout << render_table(records);
  fs::create_directories(st.out_dir);
  for (const fs::path& path : emit_dat_series(records, st.out_dir)) {
    std::cout << "emitted " << path.string() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CliState st;
  CLI::App app{"compressive channel estimation bench"};
  app.require_subcommand(1);
  app.add_option("--seed", st.seed, "base RNG seed");
  app.add_option("--config", st.config_path, "key=value config file");
  app.add_option("--out", st.out_dir, "artifact directory");

  CLI::App* gen = app.add_subcommand("gen-data", "generate dataset splits per cell");
  CLI::App* train = app.add_subcommand("train", "train checkpoints for the configured schemes");
  CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient audit");
  CLI::App* eval = app.add_subcommand("eval", "evaluate all schemes on the base cell");
  CLI::App* sweep = app.add_subcommand("sweep", "evaluate schemes across an axis");
  CLI::App* report = app.add_subcommand("report", "render a results CSV as table and .dat");

  for (CLI::App* sub : {gen, train, gradcheck, eval, sweep, report}) sub->fallthrough();
  for (CLI::App* sub : {gen, train, sweep}) {
    sub->add_option("--axis", st.axis_tokens, "axis name (T|snr) and comma-separated values")
        ->expected(2);
  }
  for (CLI::App* sub : {eval, sweep}) {
    sub->add_flag("--nmse-squared", st.nmse_squared, "squared-norm NMSE convention");
    sub->add_flag("--per-sample-ase", st.per_sample_ase, "per-sample NMSE inside the ASE");
  }
  gradcheck->add_flag("--inject-fault", st.inject_fault)->group("");
  report->add_option("csv", st.report_csv, "results CSV to render")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (app.got_subcommand(gen)) return run_gen_data(st);
    if (app.got_subcommand(train)) return run_train(st);
    if (app.got_subcommand(gradcheck)) return run_gradcheck(st);
    if (app.got_subcommand(eval)) return run_eval_or_sweep(st);
    if (app.got_subcommand(sweep)) return run_eval_or_sweep(st);
    if (app.got_subcommand(report)) return run_report(st);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
