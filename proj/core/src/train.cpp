#include "cfbss/train.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

namespace cfbss {
namespace {

constexpr double kClampFloor = 1e-8;

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(6);
  os << std::scientific << v;
  return os.str();
}

void check_trace_freshness(double traced_theta, double param_theta, const char* who) {
  if (traced_theta != param_theta) {
    throw TrainingError(std::string(who) +
                        ": stale trace (parameters changed since the forward pass)");
  }
}

void append_branch_signature(std::ostringstream& os, const LayerTrace& tr,
                             const GroupWeights& weights, SelectionMode mode) {
  os << '|';
  if (mode == SelectionMode::Elementwise) {
    const auto mask = membership_mask(tr.selected, tr.pre.size());
    const auto* flat = tr.pre.data();
    for (Eigen::Index i = 0; i < tr.pre.size(); ++i) {
      const double a = std::abs(flat[i]);
      os << (mask[static_cast<std::size_t>(i)] && a > tr.theta ? 'p'
                                                               : (a > tr.theta ? 's' : 'z'));
    }
  } else {
    const Eigen::Index m = tr.pre.rows() / 2;
    const auto mask = membership_mask(tr.selected, m);
    const Eigen::VectorXd norms = group_row_norms(tr.pre);
    for (Eigen::Index j = 0; j < m; ++j) {
      const double t = tr.theta * weights.weight(j);
      char b = 'z';
      if (mask[static_cast<std::size_t>(j)] && norms(j) > tr.theta) {
        b = 'p';
      } else if (!mask[static_cast<std::size_t>(j)] && norms(j) > t) {
        b = 's';
      }
      os << b;
    }
  }
}

double layer_kink_margin(const LayerTrace& tr, const GroupWeights& weights, SelectionMode mode) {
  double margin = std::numeric_limits<double>::infinity();
  if (mode == SelectionMode::Elementwise) {
    const auto* flat = tr.pre.data();
    for (Eigen::Index i = 0; i < tr.pre.size(); ++i) {
      margin = std::min(margin, std::abs(std::abs(flat[i]) - tr.theta));
    }
  } else {
    const Eigen::VectorXd norms = group_row_norms(tr.pre);
    for (Eigen::Index j = 0; j < norms.size(); ++j) {
      margin = std::min(margin, std::abs(norms(j) - tr.theta));
      const double t = tr.theta * weights.weight(j);
      margin = std::min(margin, std::abs(norms(j) - t));
    }
  }
  return margin;
}

std::string coarse_signature(const CoarseTrace& trace, Eigen::Index m) {
  std::ostringstream os;
  const GroupWeights uniform = GroupWeights::uniform(m);
  for (const auto& tr : trace.layers) append_branch_signature(os, tr, uniform, trace.mode);
  return os.str();
}

std::string fine_signature(const FineTrace& trace) {
  std::ostringstream os;
  for (const auto& frame : trace.frames) {
    os << '#';
    for (const auto flag : frame.weights.weighted) os << (flag ? '1' : '0');
    for (const auto& tr : frame.layers) {
      append_branch_signature(os, tr, frame.weights, SelectionMode::Grouped);
    }
  }
  return os.str();
}

double coarse_kink_margin(const CoarseTrace& trace, Eigen::Index m) {
  const GroupWeights uniform = GroupWeights::uniform(m);
  double margin = std::numeric_limits<double>::infinity();
  for (const auto& tr : trace.layers) {
    margin = std::min(margin, layer_kink_margin(tr, uniform, trace.mode));
  }
  return margin;
}

double fine_kink_margin(const FineTrace& trace) {
  double margin = std::numeric_limits<double>::infinity();
  for (const auto& frame : trace.frames) {
    for (const auto& tr : frame.layers) {
      margin = std::min(margin, layer_kink_margin(tr, frame.weights, SelectionMode::Grouped));
    }
  }
  return margin;
}

struct TensorCheck {
  std::string name;
  std::vector<double*> values;
  std::vector<double> analytic;
};

GradcheckReport fd_engine(std::vector<TensorCheck>& tensors,
                          const std::function<std::pair<double, std::string>()>& eval,
                          double nominal_kink_margin, double tolerance) {
  GradcheckReport rep;
  rep.tolerance = tolerance;
  const bool kink_adjacent = nominal_kink_margin < 1e-3;
  const std::pair<double, std::string> base = eval();
  for (auto& tensor : tensors) {
    std::vector<double> fd(tensor.values.size(), 0.0);
    std::vector<char> checked(tensor.values.size(), 0);
    for (std::size_t i = 0; i < tensor.values.size(); ++i) {
      double& x = *tensor.values[i];
      const double x0 = x;
      const double h = 1e-6 * std::max(1.0, std::abs(x0));
      // A perturbation may leave the parameter domain (e.g. theta = 0 probed
      // at -h); such sides report no value and trigger the one-sided form.
      const auto probe = [&](double value) -> std::optional<std::pair<double, std::string>> {
        x = value;
        try {
          return eval();
        } catch (const std::invalid_argument&) {
          return std::nullopt;
        }
      };
      const auto plus = probe(x0 + h);
      const auto minus = probe(x0 - h);
      x = x0;
      bool usable = !kink_adjacent;
      if (usable && plus && minus && plus->second == minus->second) {
        fd[i] = (plus->first - minus->first) / (2.0 * h);
      } else if (usable && plus && !minus) {
        // Second-order forward difference keeps the O(h^2) truncation error.
        const auto plus2 = probe(x0 + 2.0 * h);
        x = x0;
        usable = plus2 && plus->second == base.second && plus2->second == base.second;
        if (usable) fd[i] = (-3.0 * base.first + 4.0 * plus->first - plus2->first) / (2.0 * h);
      } else if (usable && minus && !plus) {
        const auto minus2 = probe(x0 - 2.0 * h);
        x = x0;
        usable = minus2 && minus->second == base.second && minus2->second == base.second;
        if (usable) fd[i] = (3.0 * base.first - 4.0 * minus->first + minus2->first) / (2.0 * h);
      } else {
        usable = false;
      }
      if (!usable) {
        ++rep.excluded_points;
        continue;
      }
      checked[i] = 1;
      ++rep.checked_points;
    }
    double denom = 1e-8;
    for (std::size_t i = 0; i < fd.size(); ++i) {
      if (!checked[i]) continue;
      denom = std::max({denom, std::abs(tensor.analytic[i]), std::abs(fd[i])});
    }
    for (std::size_t i = 0; i < fd.size(); ++i) {
      if (!checked[i]) continue;
      const double rel = std::abs(tensor.analytic[i] - fd[i]) / denom;
      if (rel > rep.max_rel_error) {
        rep.max_rel_error = rel;
        rep.worst_param = tensor.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  rep.passed = rep.checked_points > 0 && rep.max_rel_error < tolerance;
  return rep;
}

std::vector<double> pack_params(const std::vector<UnrolledLayer>& layers, const double* omega) {
  std::vector<double> out;
  for (const auto& l : layers) {
    out.insert(out.end(), l.w.data(), l.w.data() + l.w.size());
    out.push_back(l.theta);
  }
  if (omega != nullptr) out.push_back(*omega);
  return out;
}

void unpack_params(std::vector<UnrolledLayer>& layers, double* omega,
                   const std::vector<double>& flat) {
  std::size_t k = 0;
  for (auto& l : layers) {
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(k),
              flat.begin() + static_cast<std::ptrdiff_t>(k + static_cast<std::size_t>(l.w.size())),
              l.w.data());
    k += static_cast<std::size_t>(l.w.size());
    l.theta = flat[k++];
  }
  if (omega != nullptr) *omega = flat[k++];
}

/// Everything run_stage needs to optimize one truncated net.
struct StageProblem {
  // Mean batch loss; when grad sinks are non-null, accumulates mean gradients
  // aligned with `mats` / `scalars`.
  std::function<double(const std::vector<std::size_t>&, std::vector<Eigen::MatrixXd>*,
                       std::vector<double>*)>
      batch_loss;
  std::function<double()> val_loss;
  std::function<std::vector<double>()> snapshot;
  std::function<void(const std::vector<double>&)> restore;
  std::vector<Eigen::MatrixXd*> mats;
  std::vector<double*> scalars;  // clamped at kClampFloor after each step
  std::size_t train_size = 0;
};

StageRecord run_stage(StageProblem& prob, const TrainConfig& cfg, double lr, char tag, int layer,
                      std::uint64_t stage_seed, std::vector<std::string>& log, int& total_steps,
                      int& total_clamped_steps, int& total_clamp_events) {
  StageRecord rec;
  rec.layer = layer;
  rec.stage = tag;
  const std::vector<double> pre_stage = prob.snapshot();
  const int max_attempts = tag == 'A' ? 3 : 1;

  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    prob.restore(pre_stage);
    rec.retries = attempt;

    Adam adam(lr);
    std::vector<AdamSlot> mat_slots(prob.mats.size());
    std::vector<AdamSlot> scalar_slots(prob.scalars.size());
    std::mt19937_64 shuffle_rng(split_seed(stage_seed, static_cast<std::uint64_t>(attempt)));
    std::vector<std::size_t> order(prob.train_size);
    std::iota(order.begin(), order.end(), std::size_t{0});

    double best_val = prob.val_loss();
    std::vector<double> best_params = prob.snapshot();
    int bad_checks = 0;
    int steps = 0;
    int clamped_steps = 0;
    int clamp_events = 0;
    bool have_initial = false;
    double initial_loss = 0.0;
    std::vector<std::size_t> first_batch;

    {
      std::ostringstream os;
      os << "layer=" << layer << " stage=" << tag << " attempt=" << attempt
         << " baseline_val_loss=" << format_double(best_val);
      log.push_back(os.str());
    }

    for (int epoch = 0; epoch < cfg.max_epochs_per_stage && bad_checks < cfg.patience; ++epoch) {
      std::shuffle(order.begin(), order.end(), shuffle_rng);
      int epoch_steps = 0;
      for (std::size_t pos = 0;
           pos < order.size() && epoch_steps < cfg.layerwise_steps_per_stage;
           pos += static_cast<std::size_t>(cfg.train_batch)) {
        const std::size_t end =
            std::min(order.size(), pos + static_cast<std::size_t>(cfg.train_batch));
        const std::vector<std::size_t> batch(order.begin() + static_cast<std::ptrdiff_t>(pos),
                                             order.begin() + static_cast<std::ptrdiff_t>(end));
        std::vector<Eigen::MatrixXd> mat_grads;
        std::vector<double> scalar_grads;
        const double loss = prob.batch_loss(batch, &mat_grads, &scalar_grads);
        if (!std::isfinite(loss)) {
          std::ostringstream os;
          os << "training diverged: non-finite loss at layer=" << layer << " stage=" << tag
             << " epoch=" << epoch << " step=" << steps;
          throw TrainingError(os.str());
        }
        if (!have_initial) {
          have_initial = true;
          initial_loss = loss;
          first_batch = batch;
        }
        for (std::size_t i = 0; i < prob.mats.size(); ++i) {
          adam.update(*prob.mats[i], mat_grads[i], mat_slots[i]);
        }
        bool clamped = false;
        for (std::size_t i = 0; i < prob.scalars.size(); ++i) {
          adam.update_scalar(*prob.scalars[i], scalar_grads[i], scalar_slots[i]);
          if (*prob.scalars[i] < kClampFloor) {
            *prob.scalars[i] = kClampFloor;
            clamped = true;
            ++clamp_events;
          }
        }
        if (clamped) ++clamped_steps;
        ++steps;
        ++epoch_steps;
        std::ostringstream os;
        os << "layer=" << layer << " stage=" << tag << " epoch=" << epoch << " step=" << steps
           << " train_loss=" << format_double(loss) << " clamp_events=" << clamp_events;
        log.push_back(os.str());
      }

      const double vloss = prob.val_loss();
      if (!std::isfinite(vloss)) {
        throw TrainingError("training diverged: non-finite validation loss");
      }
      {
        std::ostringstream os;
        os << "layer=" << layer << " stage=" << tag << " epoch=" << epoch
           << " val_loss=" << format_double(vloss);
        log.push_back(os.str());
      }
      if (vloss < best_val) {
        best_val = vloss;
        best_params = prob.snapshot();
        bad_checks = 0;
      } else {
        ++bad_checks;
      }
    }

    // The improvement guard judges the optimization trajectory, so the final
    // first-batch loss is measured at the params the steps actually reached;
    // only afterwards do we roll back to the best-validation snapshot for
    // model selection.  Measuring after the rollback would pin final == initial
    // whenever validation never improves, failing stages whose descent was fine.
    total_steps += steps;
    total_clamped_steps += clamped_steps;
    total_clamp_events += clamp_events;
    rec.steps = steps;
    rec.clamp_events = clamp_events;
    rec.best_val_loss = best_val;
    rec.initial_loss = initial_loss;
    rec.final_loss = have_initial ? prob.batch_loss(first_batch, nullptr, nullptr) : 0.0;
    prob.restore(best_params);

    const bool improved = !have_initial || rec.final_loss < rec.initial_loss ||
                          rec.initial_loss <= 1e-20;
    if (tag != 'A' || improved) return rec;

    std::ostringstream os;
    os << "layer=" << layer << " stage=A attempt=" << attempt
       << " failed_improvement initial=" << format_double(rec.initial_loss)
       << " final=" << format_double(rec.final_loss) << " retrying";
    log.push_back(os.str());
  }

  std::ostringstream os;
  os << "stage A for layer " << layer << " failed to improve its first-batch loss after "
     << max_attempts << " seeded attempts (initial=" << format_double(rec.initial_loss)
     << ", final=" << format_double(rec.final_loss) << "); recent stage log:";
  const std::size_t tail = std::min<std::size_t>(log.size(), 40);
  for (std::size_t i = log.size() - tail; i < log.size(); ++i) os << "\n  " << log[i];
  throw TrainingError(os.str());
}

void check_dataset_pair(const Dataset& train, const Dataset& val) {
  if (train.episodes.empty() || val.episodes.empty()) {
    throw std::invalid_argument("training requires non-empty train and val datasets");
  }
  if (train.cfg.M != val.cfg.M || train.cfg.N != val.cfg.N || train.cfg.T != val.cfg.T ||
      train.cfg.L != val.cfg.L) {
    throw std::invalid_argument("train/val dataset dimensions disagree");
  }
  if (train.phi.data().rows() != val.phi.data().rows() ||
      train.phi.data().cols() != val.phi.data().cols() ||
      (train.phi.data().array() != val.phi.data().array()).any()) {
    throw std::invalid_argument(
        "train/val sensing operators differ; generate both splits from the same seed");
  }
}

std::vector<LiftedMatrix> calibration_signals(const Dataset& ds, std::size_t cap = 32) {
  std::vector<LiftedMatrix> out;
  const std::size_t n = std::min(cap, ds.episodes.size());
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(ds.episodes[i].r_bar);
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (learning_rate <= 0.0 || refine_lr <= 0.0) {
    throw std::invalid_argument("TrainConfig: learning rates must be positive");
  }
  if (train_batch < 1 || val_batch < 1) {
    throw std::invalid_argument("TrainConfig: batch sizes must be positive");
  }
  if (layerwise_steps_per_stage < 1 || max_epochs_per_stage < 1 || patience < 1) {
    throw std::invalid_argument("TrainConfig: stage limits must be positive");
  }
}

void Adam::update(Eigen::MatrixXd& param, const Eigen::MatrixXd& grad, AdamSlot& slot) const {
  if (grad.rows() != param.rows() || grad.cols() != param.cols()) {
    throw std::invalid_argument("Adam::update: gradient shape mismatch");
  }
  if (slot.step == 0) {
    slot.m = Eigen::MatrixXd::Zero(param.rows(), param.cols());
    slot.v = Eigen::MatrixXd::Zero(param.rows(), param.cols());
  }
  ++slot.step;
  slot.m = beta1_ * slot.m + (1.0 - beta1_) * grad;
  slot.v = beta2_ * slot.v + (1.0 - beta2_) * grad.cwiseProduct(grad);
  const double mc = 1.0 - std::pow(beta1_, static_cast<double>(slot.step));
  const double vc = 1.0 - std::pow(beta2_, static_cast<double>(slot.step));
  param.array() -= lr_ * (slot.m.array() / mc) / ((slot.v.array() / vc).sqrt() + eps_);
}

void Adam::update_scalar(double& param, double grad, AdamSlot& slot) const {
  Eigen::MatrixXd p(1, 1), g(1, 1);
  p(0, 0) = param;
  g(0, 0) = grad;
  update(p, g, slot);
  param = p(0, 0);
}

LossResult mse_loss(const LiftedMatrix& pred, const LiftedMatrix& truth) {
  if (pred.data().rows() != truth.data().rows() || pred.data().cols() != truth.data().cols()) {
    throw std::invalid_argument("mse_loss: shape mismatch");
  }
  LossResult res;
  const Eigen::MatrixXd diff = pred.data() - truth.data();
  const double n = static_cast<double>(diff.size());
  res.value = diff.squaredNorm() / n;
  res.cotangent = (2.0 / n) * diff;
  return res;
}

CoarseGrads backward_coarse(const CoarseNetParams& params, const LiftedMatrix& phi,
                            const CoarseTrace& trace, const Eigen::MatrixXd& output_cotangent) {
  if (trace.layers.empty()) throw TrainingError("backward_coarse: empty trace");
  if (trace.layers.size() > params.layers.size()) {
    throw TrainingError("backward_coarse: stale trace (more layers than params)");
  }
  const Eigen::Index m = phi.complex_cols();
  const GroupWeights uniform = GroupWeights::uniform(m);

  CoarseGrads grads;
  grads.w.resize(trace.layers.size());
  grads.theta.assign(trace.layers.size(), 0.0);

  Eigen::MatrixXd up = output_cotangent;
  for (int l = static_cast<int>(trace.layers.size()) - 1; l >= 0; --l) {
    const LayerTrace& tr = trace.layers[static_cast<std::size_t>(l)];
    check_trace_freshness(tr.theta, params.layers[static_cast<std::size_t>(l)].theta,
                          "backward_coarse");
    Eigen::MatrixXd u_pre;
    if (trace.mode == SelectionMode::Elementwise) {
      EssVjp v = ess_vjp(tr.pre, tr.theta, membership_mask(tr.selected, tr.pre.size()), up);
      grads.theta[static_cast<std::size_t>(l)] = v.theta_cotangent;
      u_pre = std::move(v.input_cotangent);
    } else {
      GbssVjp v = gbss_vjp(tr.pre, tr.theta, uniform, membership_mask(tr.selected, m), up);
      grads.theta[static_cast<std::size_t>(l)] = v.theta_cotangent;
      u_pre = std::move(v.input_cotangent);
    }
    grads.w[static_cast<std::size_t>(l)] = u_pre * tr.residual.transpose();
    if (l > 0) {
      up = u_pre - phi.data().transpose() *
                       (params.layers[static_cast<std::size_t>(l)].w.transpose() * u_pre);
    }
  }
  return grads;
}

FineGrads backward_fine(const FineNetParams& params, const LiftedMatrix& phi,
                        const FineTrace& trace, const Eigen::MatrixXd& output_cotangent) {
  if (trace.frames.empty()) throw TrainingError("backward_fine: empty trace");
  const Eigen::Index m = phi.complex_cols();
  const std::size_t active = trace.frames.front().layers.size();
  if (active == 0 || active > params.layers.size()) {
    throw TrainingError("backward_fine: stale trace (layer count mismatch)");
  }

  FineGrads grads;
  grads.w.assign(active, Eigen::MatrixXd::Zero(params.layers.front().w.rows(),
                                               params.layers.front().w.cols()));
  grads.theta.assign(active, 0.0);

  Eigen::Index col = 0;
  for (const auto& frame : trace.frames) {
    const Eigen::Index cols = frame.layers.back().output.cols();
    Eigen::MatrixXd up = output_cotangent.middleCols(col, cols);
    col += cols;
    for (int l = static_cast<int>(frame.layers.size()) - 1; l >= 0; --l) {
      const LayerTrace& tr = frame.layers[static_cast<std::size_t>(l)];
      check_trace_freshness(tr.theta, params.layers[static_cast<std::size_t>(l)].theta,
                            "backward_fine");
      GbssVjp v = gbss_vjp(tr.pre, tr.theta, frame.weights, membership_mask(tr.selected, m), up);
      grads.theta[static_cast<std::size_t>(l)] += v.theta_cotangent;
      grads.omega += v.omega_cotangent;
      grads.w[static_cast<std::size_t>(l)] += v.input_cotangent * tr.residual.transpose();
      if (l > 0) {
        up = v.input_cotangent -
             phi.data().transpose() *
                 (params.layers[static_cast<std::size_t>(l)].w.transpose() * v.input_cotangent);
      }
      // l == 0: the cotangent at the coarse initialization is dropped (the
      // coarse net is frozen while the fine net trains).
    }
  }
  if (col != output_cotangent.cols()) {
    throw TrainingError("backward_fine: cotangent column count does not match the trace");
  }
  return grads;
}

GradcheckReport gradcheck_coarse(const CoarseNetParams& params0, const LiftedMatrix& phi,
                                 const LiftedMatrix& r_bar, const LiftedMatrix& truth,
                                 SelectionMode mode, double tolerance, bool inject_fault) {
  CoarseNetParams params = params0;
  const Eigen::Index m = phi.complex_cols();
  auto eval = [&]() -> std::pair<double, std::string> {
    const CoarseTrace tr = coarse_forward(params, phi, r_bar, mode);
    return {mse_loss(tr.output(), truth).value, coarse_signature(tr, m)};
  };

  const CoarseTrace trace = coarse_forward(params, phi, r_bar, mode);
  const LossResult loss = mse_loss(trace.output(), truth);
  CoarseGrads grads = backward_coarse(params, phi, trace, loss.cotangent);
  if (inject_fault) {
    for (auto& gw : grads.w) gw = -gw;
    for (auto& gt : grads.theta) gt = -gt;
  }

  std::vector<TensorCheck> tensors;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    TensorCheck w;
    w.name = "W" + std::to_string(l);
    for (Eigen::Index i = 0; i < params.layers[l].w.size(); ++i) {
      w.values.push_back(params.layers[l].w.data() + i);
      w.analytic.push_back(grads.w[l].data()[i]);
    }
    tensors.push_back(std::move(w));
    TensorCheck th;
    th.name = "theta" + std::to_string(l);
    th.values.push_back(&params.layers[l].theta);
    th.analytic.push_back(grads.theta[l]);
    tensors.push_back(std::move(th));
  }
  return fd_engine(tensors, eval, coarse_kink_margin(trace, m), tolerance);
}

GradcheckReport gradcheck_fine(const FineNetParams& params0, const LiftedMatrix& phi,
                               const std::vector<LiftedMatrix>& z_frames,
                               const std::vector<LiftedMatrix>& coarse_frames,
                               const LiftedMatrix& truth, double tolerance, bool inject_fault) {
  FineNetParams params = params0;
  auto eval = [&]() -> std::pair<double, std::string> {
    const FineTrace tr = fine_forward_episode(params, phi, z_frames, coarse_frames);
    return {mse_loss(tr.output, truth).value, fine_signature(tr)};
  };

  const FineTrace trace = fine_forward_episode(params, phi, z_frames, coarse_frames);
  const LossResult loss = mse_loss(trace.output, truth);
  FineGrads grads = backward_fine(params, phi, trace, loss.cotangent);
  if (inject_fault) {
    for (auto& gw : grads.w) gw = -gw;
    for (auto& gt : grads.theta) gt = -gt;
    grads.omega = -grads.omega;
  }

  std::vector<TensorCheck> tensors;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    TensorCheck w;
    w.name = "W" + std::to_string(l);
    for (Eigen::Index i = 0; i < params.layers[l].w.size(); ++i) {
      w.values.push_back(params.layers[l].w.data() + i);
      w.analytic.push_back(grads.w[l].data()[i]);
    }
    tensors.push_back(std::move(w));
    TensorCheck th;
    th.name = "theta" + std::to_string(l);
    th.values.push_back(&params.layers[l].theta);
    th.analytic.push_back(grads.theta[l]);
    tensors.push_back(std::move(th));
  }
  TensorCheck om;
  om.name = "omega";
  om.values.push_back(&params.omega);
  om.analytic.push_back(grads.omega);
  tensors.push_back(std::move(om));
  return fd_engine(tensors, eval, fine_kink_margin(trace), tolerance);
}

TrainResult train_coarse(const Dataset& train, const Dataset& val, const TrainConfig& cfg,
                         SelectionMode mode, int layers) {
  cfg.validate();
  check_dataset_pair(train, val);

  // Grouped and plain variants bound the selection by the common-support
  // size; the element-wise variant ranks scalar entries against the prior
  // per-frame sparsity bounds (s_c, s_bar) instead.
  const SupportSchedule sched = mode == SelectionMode::Elementwise
                                    ? make_fine_schedule(train.cfg, layers)
                                    : make_coarse_schedule(train.cfg, layers);
  CoarseNetParams params =
      init_coarse_params(train.phi, layers, sched.p_min, sched.p_max, calibration_signals(train));

  const std::size_t val_count =
      std::min(static_cast<std::size_t>(cfg.val_batch), val.episodes.size());

  TrainResult res;
  int total_clamped_steps = 0;
  std::uint64_t stage_counter = 0;

  for (int l = 1; l <= layers; ++l) {
    for (const char tag : {'A', 'B'}) {
      const int first_trainable = tag == 'A' ? l - 1 : 0;
      StageProblem prob;
      prob.train_size = train.episodes.size();
      for (int t = first_trainable; t < l; ++t) {
        prob.mats.push_back(&params.layers[static_cast<std::size_t>(t)].w);
        prob.scalars.push_back(&params.layers[static_cast<std::size_t>(t)].theta);
      }
      prob.snapshot = [&params]() { return pack_params(params.layers, nullptr); };
      prob.restore = [&params](const std::vector<double>& flat) {
        unpack_params(params.layers, nullptr, flat);
      };
      prob.batch_loss = [&, l, first_trainable](const std::vector<std::size_t>& batch,
                                                std::vector<Eigen::MatrixXd>* mg,
                                                std::vector<double>* sg) {
        const double scale = 1.0 / static_cast<double>(batch.size());
        if (mg != nullptr) {
          mg->assign(static_cast<std::size_t>(l - first_trainable),
                     Eigen::MatrixXd::Zero(params.layers.front().w.rows(),
                                           params.layers.front().w.cols()));
          sg->assign(static_cast<std::size_t>(l - first_trainable), 0.0);
        }
        double loss_sum = 0.0;
        for (const std::size_t idx : batch) {
          const EpisodeSample& ep = train.episodes[idx];
          const CoarseTrace tr = coarse_forward(params, train.phi, ep.r_bar, mode, l);
          const LossResult lr = mse_loss(tr.output(), ep.g_bar);
          loss_sum += lr.value;
          if (mg != nullptr) {
            const CoarseGrads g = backward_coarse(params, train.phi, tr, lr.cotangent);
            for (int t = first_trainable; t < l; ++t) {
              (*mg)[static_cast<std::size_t>(t - first_trainable)] +=
                  scale * g.w[static_cast<std::size_t>(t)];
              (*sg)[static_cast<std::size_t>(t - first_trainable)] +=
                  scale * g.theta[static_cast<std::size_t>(t)];
            }
          }
        }
        return loss_sum * scale;
      };
      prob.val_loss = [&, l]() {
        double sum = 0.0;
        for (std::size_t i = 0; i < val_count; ++i) {
          const EpisodeSample& ep = val.episodes[i];
          sum += mse_loss(coarse_forward(params, val.phi, ep.r_bar, mode, l).output(), ep.g_bar)
                     .value;
        }
        return sum / static_cast<double>(val_count);
      };

      res.stages.push_back(run_stage(
          prob, cfg, tag == 'A' ? cfg.learning_rate : cfg.refine_lr, tag, l,
          split_seed(cfg.seed, 1000 + stage_counter++), res.log_lines, res.total_steps,
          total_clamped_steps, res.total_clamp_events));
    }
  }

  res.final_val_loss = res.stages.back().best_val_loss;
  res.health_ok = res.total_steps == 0 ||
                  static_cast<double>(total_clamped_steps) <=
                      0.01 * static_cast<double>(res.total_steps);

  res.checkpoint.kind = kind_for_mode(mode);
  res.checkpoint.coarse = std::move(params);
  res.checkpoint.meta.set_int("seed", static_cast<std::int64_t>(cfg.seed));
  res.checkpoint.meta.set_double("val_loss", res.final_val_loss);
  res.checkpoint.meta.set_int("steps", res.total_steps);
  res.checkpoint.meta.set_int("health_ok", res.health_ok ? 1 : 0);
  return res;
}

TrainResult train_fine(const Dataset& train, const Dataset& val, const TrainConfig& cfg,
                       const CoarseNetParams& frozen_coarse, int layers) {
  cfg.validate();
  check_dataset_pair(train, val);

  const SupportSchedule sched = make_fine_schedule(train.cfg, layers);
  FineNetParams params =
      init_fine_params(train.phi, layers, sched.p_min, sched.p_max, calibration_signals(train));

  // The coarse stage is frozen: precompute its per-frame outputs once.
  auto precompute = [&](const Dataset& ds) {
    std::vector<std::vector<LiftedMatrix>> z(ds.episodes.size());
    std::vector<std::vector<LiftedMatrix>> s0(ds.episodes.size());
    for (std::size_t i = 0; i < ds.episodes.size(); ++i) {
      const EpisodeSample& ep = ds.episodes[i];
      z[i] = split_frames(ep.r_bar, ep.n_rx);
      s0[i] = split_frames(coarse_forward(frozen_coarse, ds.phi, ep.r_bar).output(), ep.n_rx);
    }
    return std::make_pair(std::move(z), std::move(s0));
  };
  const auto [train_z, train_s0] = precompute(train);
  const auto [val_z, val_s0] = precompute(val);

  const std::size_t val_count =
      std::min(static_cast<std::size_t>(cfg.val_batch), val.episodes.size());

  TrainResult res;
  int total_clamped_steps = 0;
  std::uint64_t stage_counter = 0;

  for (int l = 1; l <= layers; ++l) {
    for (const char tag : {'A', 'B'}) {
      const int first_trainable = tag == 'A' ? l - 1 : 0;
      StageProblem prob;
      prob.train_size = train.episodes.size();
      for (int t = first_trainable; t < l; ++t) {
        prob.mats.push_back(&params.layers[static_cast<std::size_t>(t)].w);
        prob.scalars.push_back(&params.layers[static_cast<std::size_t>(t)].theta);
      }
      prob.scalars.push_back(&params.omega);
      prob.snapshot = [&params]() { return pack_params(params.layers, &params.omega); };
      prob.restore = [&params](const std::vector<double>& flat) {
        unpack_params(params.layers, &params.omega, flat);
      };
      prob.batch_loss = [&, l, first_trainable](const std::vector<std::size_t>& batch,
                                                std::vector<Eigen::MatrixXd>* mg,
                                                std::vector<double>* sg) {
        const double scale = 1.0 / static_cast<double>(batch.size());
        const std::size_t trainable = static_cast<std::size_t>(l - first_trainable);
        if (mg != nullptr) {
          mg->assign(trainable, Eigen::MatrixXd::Zero(params.layers.front().w.rows(),
                                                      params.layers.front().w.cols()));
          sg->assign(trainable + 1, 0.0);  // thetas then omega
        }
        double loss_sum = 0.0;
        for (const std::size_t idx : batch) {
          const EpisodeSample& ep = train.episodes[idx];
          const FineTrace tr =
              fine_forward_episode(params, train.phi, train_z[idx], train_s0[idx], l);
          const LossResult lr = mse_loss(tr.output, ep.g_bar);
          loss_sum += lr.value;
          if (mg != nullptr) {
            const FineGrads g = backward_fine(params, train.phi, tr, lr.cotangent);
            for (int t = first_trainable; t < l; ++t) {
              (*mg)[static_cast<std::size_t>(t - first_trainable)] +=
                  scale * g.w[static_cast<std::size_t>(t)];
              (*sg)[static_cast<std::size_t>(t - first_trainable)] +=
                  scale * g.theta[static_cast<std::size_t>(t)];
            }
            (*sg)[trainable] += scale * g.omega;
          }
        }
        return loss_sum * scale;
      };
      prob.val_loss = [&, l]() {
        double sum = 0.0;
        for (std::size_t i = 0; i < val_count; ++i) {
          const FineTrace tr = fine_forward_episode(params, val.phi, val_z[i], val_s0[i], l);
          sum += mse_loss(tr.output, val.episodes[i].g_bar).value;
        }
        return sum / static_cast<double>(val_count);
      };

      res.stages.push_back(run_stage(
          prob, cfg, tag == 'A' ? cfg.learning_rate : cfg.refine_lr, tag, l,
          split_seed(cfg.seed, 2000 + stage_counter++), res.log_lines, res.total_steps,
          total_clamped_steps, res.total_clamp_events));
    }
  }

  res.final_val_loss = res.stages.back().best_val_loss;
  res.health_ok = res.total_steps == 0 ||
                  static_cast<double>(total_clamped_steps) <=
                      0.01 * static_cast<double>(res.total_steps);

  res.checkpoint.kind = "fine";
  res.checkpoint.fine = std::move(params);
  res.checkpoint.meta.set_int("seed", static_cast<std::int64_t>(cfg.seed));
  res.checkpoint.meta.set_double("val_loss", res.final_val_loss);
  res.checkpoint.meta.set_int("steps", res.total_steps);
  res.checkpoint.meta.set_int("health_ok", res.health_ok ? 1 : 0);
  return res;
}

}  // namespace cfbss
