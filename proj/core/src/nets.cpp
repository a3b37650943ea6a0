#include "cfbss/nets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "cfbss/dataset.hpp"

namespace cfbss {
namespace {

void validate_layers(const std::vector<UnrolledLayer>& layers, const SupportSchedule& schedule,
                     Eigen::Index m, Eigen::Index t, const char* who) {
  schedule.validate();
  if (layers.empty()) throw std::invalid_argument(std::string(who) + ": no layers");
  if (schedule.num_layers != static_cast<int>(layers.size())) {
    throw std::invalid_argument(std::string(who) + ": schedule/layer count mismatch");
  }
  if (schedule.group_count != m) {
    throw std::invalid_argument(std::string(who) + ": schedule group count must equal M");
  }
  for (const auto& layer : layers) {
    if (layer.w.rows() != 2 * m || layer.w.cols() != 2 * t) {
      throw std::invalid_argument(std::string(who) + ": W must be 2M x 2T");
    }
    if (!(layer.theta >= 0.0)) {
      throw std::invalid_argument(std::string(who) + ": theta must be >= 0");
    }
  }
}

LayerTrace run_layer(const UnrolledLayer& layer, const Eigen::MatrixXd& phi,
                     const Eigen::MatrixXd& r, const Eigen::MatrixXd& input, double fraction,
                     SelectionMode mode, const GroupWeights& weights) {
  LayerTrace tr;
  tr.input = input;
  tr.residual = r - phi * input;
  tr.pre = input + layer.w * tr.residual;
  tr.theta = layer.theta;
  switch (mode) {
    case SelectionMode::Grouped: {
      tr.selected = support_select(group_row_norms(tr.pre), fraction);
      tr.output = gbss_apply(tr.pre, layer.theta, weights,
                             membership_mask(tr.selected, tr.pre.rows() / 2));
      break;
    }
    case SelectionMode::None: {
      tr.output =
          gbss_apply(tr.pre, layer.theta, weights, membership_mask({}, tr.pre.rows() / 2));
      break;
    }
    case SelectionMode::Elementwise: {
      const Eigen::VectorXd mags =
          Eigen::Map<const Eigen::VectorXd>(tr.pre.data(), tr.pre.size()).cwiseAbs();
      tr.selected = support_select(mags, fraction);
      tr.output = ess_apply(tr.pre, layer.theta, membership_mask(tr.selected, tr.pre.size()));
      break;
    }
  }
  return tr;
}

int resolve_active(int active_layers, std::size_t total, const char* who) {
  const int n = active_layers < 0 ? static_cast<int>(total) : active_layers;
  if (n < 1 || n > static_cast<int>(total)) {
    throw std::invalid_argument(std::string(who) + ": active layer count out of range");
  }
  return n;
}

double median_nonzero_group_norm(const LiftedMatrix& phi,
                                 const std::vector<LiftedMatrix>& calibration) {
  std::vector<double> norms;
  for (const auto& r : calibration) {
    if (r.kind() != LiftKind::Signal || r.complex_rows() != phi.complex_rows()) {
      throw std::invalid_argument("init params: calibration signal does not conform to phi");
    }
    const Eigen::VectorXd g = group_row_norms(phi.data().transpose() * r.data());
    for (Eigen::Index j = 0; j < g.size(); ++j) {
      if (g(j) > 1e-12) norms.push_back(g(j));
    }
  }
  if (norms.empty()) return 0.0;
  std::sort(norms.begin(), norms.end());
  const std::size_t mid = norms.size() / 2;
  return norms.size() % 2 == 1 ? norms[mid] : 0.5 * (norms[mid - 1] + norms[mid]);
}

std::vector<UnrolledLayer> init_layers(const LiftedMatrix& phi, int layers,
                                       const std::vector<LiftedMatrix>& calibration) {
  if (phi.kind() != LiftKind::Operator) {
    throw std::invalid_argument("init params: phi must be an operator lift");
  }
  if (layers < 1) throw std::invalid_argument("init params: need at least one layer");
  UnrolledLayer proto;
  proto.w = phi.data().transpose() / spectral_norm_sq(phi.data());
  proto.theta = 0.1 * median_nonzero_group_norm(phi, calibration);
  return std::vector<UnrolledLayer>(static_cast<std::size_t>(layers), proto);
}

const std::vector<std::string>& reserved_checkpoint_keys() {
  static const std::vector<std::string> keys = {"kind",  "layers", "w_rows",
                                                "w_cols", "group_count", "p_min", "p_max"};
  return keys;
}

}  // namespace

void CoarseNetParams::validate(Eigen::Index m, Eigen::Index t) const {
  validate_layers(layers, schedule, m, t, "CoarseNetParams");
}

void FineNetParams::validate(Eigen::Index m, Eigen::Index t) const {
  validate_layers(layers, schedule, m, t, "FineNetParams");
  if (!(omega > 0.0)) throw std::invalid_argument("FineNetParams: omega must be > 0");
}

std::string variant_tag(NetVariant v) {
  switch (v) {
    case NetVariant::TwoStage: return "two_stage";
    case NetVariant::CoarseOnly: return "coarse_only";
    case NetVariant::NoSupportSelection: return "no_ss";
    case NetVariant::ElementwiseSS: return "elementwise_ss";
  }
  throw std::logic_error("variant_tag: unreachable");
}

NetVariant variant_from_tag(const std::string& tag) {
  if (tag == "two_stage") return NetVariant::TwoStage;
  if (tag == "coarse_only") return NetVariant::CoarseOnly;
  if (tag == "no_ss") return NetVariant::NoSupportSelection;
  if (tag == "elementwise_ss") return NetVariant::ElementwiseSS;
  throw std::invalid_argument("unknown net variant tag: " + tag);
}

LiftedMatrix CoarseTrace::output() const {
  if (layers.empty()) throw std::logic_error("CoarseTrace::output: empty trace");
  return LiftedMatrix::adopt_signal(layers.back().output);
}

CoarseTrace coarse_forward(const CoarseNetParams& params, const LiftedMatrix& phi,
                           const LiftedMatrix& r_bar, SelectionMode mode, int active_layers) {
  if (phi.kind() != LiftKind::Operator || r_bar.kind() != LiftKind::Signal ||
      phi.complex_rows() != r_bar.complex_rows()) {
    throw std::invalid_argument("coarse_forward: phi/measurement shapes do not conform");
  }
  params.validate(phi.complex_cols(), phi.complex_rows());
  const int active = resolve_active(active_layers, params.layers.size(), "coarse_forward");

  CoarseTrace trace;
  trace.mode = mode;
  trace.layers.reserve(static_cast<std::size_t>(active));
  const GroupWeights uniform = GroupWeights::uniform(phi.complex_cols());
  Eigen::MatrixXd g = Eigen::MatrixXd::Zero(2 * phi.complex_cols(), r_bar.data().cols());
  for (int l = 0; l < active; ++l) {
    trace.layers.push_back(run_layer(params.layers[static_cast<std::size_t>(l)], phi.data(),
                                     r_bar.data(), g, params.schedule.fraction_at(l), mode,
                                     uniform));
    g = trace.layers.back().output;
  }
  return trace;
}

FineTrace fine_forward_episode(const FineNetParams& params, const LiftedMatrix& phi,
                               const std::vector<LiftedMatrix>& z_frames,
                               const std::vector<LiftedMatrix>& coarse_frames,
                               int active_layers) {
  params.validate(phi.complex_cols(), phi.complex_rows());
  if (z_frames.empty() || z_frames.size() != coarse_frames.size()) {
    throw std::invalid_argument("fine_forward_episode: frame lists must match and be non-empty");
  }
  const int active = resolve_active(active_layers, params.layers.size(), "fine_forward_episode");
  const Eigen::Index m = phi.complex_cols();

  FineTrace trace;
  trace.frames.reserve(z_frames.size());
  std::vector<Eigen::Index> prev_support;
  Eigen::MatrixXd all(2 * m, Eigen::Index(0));
  for (std::size_t i = 0; i < z_frames.size(); ++i) {
    const auto& z = z_frames[i];
    const auto& s0 = coarse_frames[i];
    if (z.kind() != LiftKind::Signal || s0.kind() != LiftKind::Signal ||
        z.complex_rows() != phi.complex_rows() || s0.complex_rows() != m ||
        z.complex_cols() != s0.complex_cols()) {
      throw std::invalid_argument("fine_forward_episode: frame shapes do not conform");
    }
    FrameTrace frame;
    frame.weights = i == 0 ? GroupWeights::uniform(m)
                           : GroupWeights::from_support(prev_support, m, params.omega);
    frame.layers.reserve(static_cast<std::size_t>(active));
    Eigen::MatrixXd s = s0.data();
    for (int l = 0; l < active; ++l) {
      frame.layers.push_back(run_layer(params.layers[static_cast<std::size_t>(l)], phi.data(),
                                       z.data(), s, params.schedule.fraction_at(l),
                                       SelectionMode::Grouped, frame.weights));
      s = frame.layers.back().output;
    }
    prev_support = support_extract(LiftedMatrix::adopt_signal(s));
    all.conservativeResize(Eigen::NoChange, all.cols() + s.cols());
    all.rightCols(s.cols()) = s;
    trace.frames.push_back(std::move(frame));
  }
  trace.output = LiftedMatrix::adopt_signal(std::move(all));
  return trace;
}

std::vector<Eigen::Index> support_extract(const LiftedMatrix& s) {
  if (s.kind() != LiftKind::Signal) {
    throw std::invalid_argument("support_extract: expected a signal lift");
  }
  const Eigen::VectorXd norms = group_row_norms(s.data());
  std::vector<Eigen::Index> out;
  for (Eigen::Index j = 0; j < norms.size(); ++j) {
    if (norms(j) > 1e-12) out.push_back(j);
  }
  return out;
}

TwoStageResult two_stage_forward(const CoarseNetParams& coarse, const FineNetParams& fine,
                                 const LiftedMatrix& phi, const LiftedMatrix& r_bar,
                                 Eigen::Index n_rx) {
  TwoStageResult res;
  res.coarse_estimate = coarse_forward(coarse, phi, r_bar).output();
  res.estimate = fine_forward_episode(fine, phi, split_frames(r_bar, n_rx),
                                      split_frames(res.coarse_estimate, n_rx))
                     .output;
  return res;
}

LiftedMatrix variant_forward(NetVariant variant, const CoarseNetParams& coarse,
                             const FineNetParams* fine, const LiftedMatrix& phi,
                             const LiftedMatrix& r_bar, Eigen::Index n_rx) {
  switch (variant) {
    case NetVariant::TwoStage:
      if (fine == nullptr) {
        throw std::invalid_argument("variant_forward: two_stage needs fine params");
      }
      return two_stage_forward(coarse, *fine, phi, r_bar, n_rx).estimate;
    case NetVariant::CoarseOnly:
      return coarse_forward(coarse, phi, r_bar, SelectionMode::Grouped).output();
    case NetVariant::NoSupportSelection:
      return coarse_forward(coarse, phi, r_bar, SelectionMode::None).output();
    case NetVariant::ElementwiseSS:
      return coarse_forward(coarse, phi, r_bar, SelectionMode::Elementwise).output();
  }
  throw std::logic_error("variant_forward: unreachable");
}

SupportSchedule make_coarse_schedule(const SparsityConfig& cfg, int layers) {
  SupportSchedule s;
  s.p_min = std::clamp<Eigen::Index>(cfg.S_common - 2, 0, cfg.M);
  s.p_max = std::clamp<Eigen::Index>(cfg.S_common + 2, 0, cfg.M);
  s.num_layers = layers;
  s.group_count = cfg.M;
  s.validate();
  return s;
}

SupportSchedule make_fine_schedule(const SparsityConfig& cfg, int layers) {
  SupportSchedule s;
  s.p_min = std::clamp<Eigen::Index>(cfg.s_c, 0, cfg.M);
  s.p_max = std::clamp<Eigen::Index>(cfg.s_bar, 0, cfg.M);
  s.num_layers = layers;
  s.group_count = cfg.M;
  s.validate();
  return s;
}

CoarseNetParams init_coarse_params(const LiftedMatrix& phi, int layers, Eigen::Index p_min,
                                   Eigen::Index p_max,
                                   const std::vector<LiftedMatrix>& calibration) {
  CoarseNetParams p;
  p.layers = init_layers(phi, layers, calibration);
  p.schedule = SupportSchedule{p_min, p_max, layers, phi.complex_cols()};
  p.validate(phi.complex_cols(), phi.complex_rows());
  return p;
}

FineNetParams init_fine_params(const LiftedMatrix& phi, int layers, Eigen::Index p_min,
                               Eigen::Index p_max, const std::vector<LiftedMatrix>& calibration,
                               double omega) {
  FineNetParams p;
  p.layers = init_layers(phi, layers, calibration);
  p.omega = omega;
  p.schedule = SupportSchedule{p_min, p_max, layers, phi.complex_cols()};
  p.validate(phi.complex_cols(), phi.complex_rows());
  return p;
}

std::size_t parameter_count(const CoarseNetParams& p) {
  std::size_t n = 0;
  for (const auto& layer : p.layers) n += static_cast<std::size_t>(layer.w.size()) + 1;
  return n;
}

std::size_t parameter_count(const FineNetParams& p) {
  std::size_t n = 1;  // omega
  for (const auto& layer : p.layers) n += static_cast<std::size_t>(layer.w.size()) + 1;
  return n;
}

SelectionMode selection_mode_for_kind(const std::string& kind) {
  if (kind == "coarse" || kind == "fine") return SelectionMode::Grouped;
  if (kind == "no_ss") return SelectionMode::None;
  if (kind == "elementwise_ss") return SelectionMode::Elementwise;
  throw std::invalid_argument("unknown checkpoint kind: " + kind);
}

std::string kind_for_mode(SelectionMode mode) {
  switch (mode) {
    case SelectionMode::Grouped: return "coarse";
    case SelectionMode::None: return "no_ss";
    case SelectionMode::Elementwise: return "elementwise_ss";
  }
  throw std::logic_error("kind_for_mode: unreachable");
}

void write_checkpoint(const NetCheckpoint& ckpt, const std::filesystem::path& path) {
  selection_mode_for_kind(ckpt.kind);  // validates the kind tag
  const std::vector<UnrolledLayer>& layers = ckpt.is_fine() ? ckpt.fine.layers : ckpt.coarse.layers;
  const SupportSchedule& schedule = ckpt.is_fine() ? ckpt.fine.schedule : ckpt.coarse.schedule;
  if (layers.empty()) throw std::invalid_argument("write_checkpoint: no layers to store");

  KeyValueConfig kv;
  kv.set("kind", ckpt.kind);
  kv.set_int("layers", static_cast<std::int64_t>(layers.size()));
  kv.set_int("w_rows", layers.front().w.rows());
  kv.set_int("w_cols", layers.front().w.cols());
  kv.set_int("group_count", schedule.group_count);
  kv.set_int("p_min", schedule.p_min);
  kv.set_int("p_max", schedule.p_max);
  for (const auto& key : ckpt.meta.keys()) {
    if (std::find(reserved_checkpoint_keys().begin(), reserved_checkpoint_keys().end(), key) ==
        reserved_checkpoint_keys().end()) {
      kv.set(key, ckpt.meta.get(key));
    }
  }

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path.string());
  out << "CEP1 " << kv.to_line() << "\n";
  for (const auto& layer : layers) {
    write_block(out, layer.w);
    write_block(out, Eigen::MatrixXd::Constant(1, 1, layer.theta));
  }
  if (ckpt.is_fine()) write_block(out, Eigen::MatrixXd::Constant(1, 1, ckpt.fine.omega));
  if (!out) throw IoError("failed writing checkpoint: " + path.string());
}

NetCheckpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  std::string header;
  if (!std::getline(in, header)) throw IoError("missing checkpoint header in " + path.string());
  if (header.rfind("CEP1 ", 0) != 0) throw IoError("not a CEP1 checkpoint: " + path.string());
  const KeyValueConfig kv = KeyValueConfig::parse(header.substr(5));

  NetCheckpoint ckpt;
  ckpt.kind = kv.get("kind");
  selection_mode_for_kind(ckpt.kind);
  const auto layer_count = kv.get_int("layers");
  const auto w_rows = kv.get_int("w_rows");
  const auto w_cols = kv.get_int("w_cols");
  if (layer_count < 1 || w_rows < 2 || w_cols < 2 || w_rows % 2 != 0 || w_cols % 2 != 0) {
    throw IoError("invalid checkpoint layer geometry in " + path.string());
  }

  SupportSchedule schedule;
  schedule.p_min = kv.get_int("p_min");
  schedule.p_max = kv.get_int("p_max");
  schedule.num_layers = static_cast<int>(layer_count);
  schedule.group_count = kv.get_int("group_count");

  std::vector<UnrolledLayer> layers;
  layers.reserve(static_cast<std::size_t>(layer_count));
  for (std::int64_t l = 0; l < layer_count; ++l) {
    UnrolledLayer layer;
    layer.w = read_block(in, path);
    if (layer.w.rows() != w_rows || layer.w.cols() != w_cols) {
      throw IoError("checkpoint W block has unexpected shape in " + path.string());
    }
    const Eigen::MatrixXd th = read_block(in, path);
    if (th.rows() != 1 || th.cols() != 1 || !(th(0, 0) >= 0.0)) {
      throw IoError("invalid theta block in " + path.string());
    }
    layer.theta = th(0, 0);
    layers.push_back(std::move(layer));
  }

  try {
    if (ckpt.is_fine()) {
      const Eigen::MatrixXd om = read_block(in, path);
      if (om.rows() != 1 || om.cols() != 1 || !(om(0, 0) > 0.0)) {
        throw IoError("invalid omega block in " + path.string());
      }
      ckpt.fine.layers = std::move(layers);
      ckpt.fine.schedule = schedule;
      ckpt.fine.omega = om(0, 0);
      ckpt.fine.validate(w_rows / 2, w_cols / 2);
    } else {
      ckpt.coarse.layers = std::move(layers);
      ckpt.coarse.schedule = schedule;
      ckpt.coarse.validate(w_rows / 2, w_cols / 2);
    }
  } catch (const std::invalid_argument& e) {
    throw IoError("inconsistent checkpoint in " + path.string() + ": " + e.what());
  }

  for (const auto& key : kv.keys()) {
    if (std::find(reserved_checkpoint_keys().begin(), reserved_checkpoint_keys().end(), key) ==
        reserved_checkpoint_keys().end()) {
      ckpt.meta.set(key, kv.get(key));
    }
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw IoError("trailing bytes after checkpoint payload in " + path.string());
  }
  return ckpt;
}

}  // namespace cfbss
