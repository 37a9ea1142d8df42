// Training by noise-prediction regression and ancestral sampling.
#pragma once

#include "diffcharge/network.hpp"
#include "diffcharge/optim.hpp"
#include "diffcharge/random.hpp"
#include "diffcharge/schedule.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace diffcharge {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A set of equal-length scenarios, one per row, with optional condition labels.
struct ScenarioBatch {
  RowMatrix values;
  std::vector<int> labels;  // empty, or one per row

  [[nodiscard]] Eigen::Index size() const { return values.rows(); }
  [[nodiscard]] Eigen::Index length() const { return values.cols(); }
  [[nodiscard]] bool conditional() const { return !labels.empty(); }
  [[nodiscard]] std::span<const double> row(Eigen::Index i) const {
    return {values.row(i).data(), static_cast<std::size_t>(values.cols())};
  }

  void validate() const {
    if (!labels.empty() && static_cast<Eigen::Index>(labels.size()) != values.rows())
      throw std::invalid_argument("scenario batch: label count does not match row count");
  }

  /// Rows carrying `label`.
  [[nodiscard]] ScenarioBatch select(int label) const {
    ScenarioBatch out;
    std::vector<Eigen::Index> keep;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == label) keep.push_back(static_cast<Eigen::Index>(i));
    out.values.resize(static_cast<Eigen::Index>(keep.size()), values.cols());
    for (std::size_t i = 0; i < keep.size(); ++i) out.values.row(static_cast<Eigen::Index>(i)) = values.row(keep[i]);
    out.labels.assign(keep.size(), label);
    return out;
  }
};

/// Dataset-wide affine map into [-1, 1].
struct NormalizationRecord {
  double min = 0.0;
  double max = 1.0;
  bool degenerate = false;

  bool operator==(const NormalizationRecord&) const = default;
};

inline NormalizationRecord fit_normalization(const RowMatrix& raw) {
  if (raw.size() == 0) throw std::invalid_argument("cannot normalize an empty matrix");
  NormalizationRecord rec{raw.minCoeff(), raw.maxCoeff(), false};
  rec.degenerate = !(rec.max > rec.min);
  return rec;
}

inline RowMatrix normalize(const RowMatrix& raw, const NormalizationRecord& rec) {
  if (rec.degenerate) return RowMatrix::Zero(raw.rows(), raw.cols());
  const double scale = 2.0 / (rec.max - rec.min);
  RowMatrix out = ((raw.array() - rec.min) * scale - 1.0).matrix();
  return out;
}

/// Normalizes with a record fitted on `raw` itself, returned through `rec`.
inline RowMatrix normalize(const RowMatrix& raw, NormalizationRecord* rec) {
  *rec = fit_normalization(raw);
  return normalize(raw, *rec);
}

inline RowMatrix denormalize(const RowMatrix& normalized, const NormalizationRecord& rec) {
  if (rec.degenerate) return RowMatrix::Constant(normalized.rows(), normalized.cols(), rec.min);
  return ((normalized.array() + 1.0) * (0.5 * (rec.max - rec.min)) + rec.min).matrix();
}

enum class LrDecay { kConstant, kCosine };

struct TrainConfig {
  int epochs = 200;
  int batch_size = 4;
  double learning_rate = 1e-3;
  int early_stop_patience = 20;
  std::uint64_t seed = 0;
  double clip_norm = 1.0;
  LrDecay lr_decay = LrDecay::kCosine;  // learning_rate is the initial rate

  bool operator==(const TrainConfig&) const = default;

  /// Rate used throughout epoch `epoch` (1-based). Cosine decay anneals from
  /// the initial rate towards zero over the epoch budget.
  [[nodiscard]] double epoch_learning_rate(int epoch) const {
    if (lr_decay == LrDecay::kConstant) return learning_rate;
    const double pi = 3.14159265358979323846;
    return 0.5 * learning_rate * (1.0 + std::cos(pi * (epoch - 1) / epochs));
  }

  void validate() const {
    if (epochs < 1 || batch_size < 1 || early_stop_patience < 1)
      throw std::invalid_argument("epochs, batch size and patience must be positive");
    if (learning_rate < 0.0) throw std::invalid_argument("learning rate must be non-negative");
    if (early_stop_patience > epochs) throw std::invalid_argument("early-stop patience exceeds epoch budget");
  }
};

struct TrainResult {
  std::vector<double> loss_history;  // epoch-mean loss, one entry per completed epoch
  int best_epoch = 0;
  bool stopped_early = false;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(int epoch, double loss)
      : std::runtime_error("training diverged at epoch " + std::to_string(epoch) + " (loss " + std::to_string(loss) +
                           ")"),
        epoch_(epoch) {}
  [[nodiscard]] int epoch() const { return epoch_; }

 private:
  int epoch_;
};

/// Callable signature of a noise predictor: (x_t, t, label) -> eps_hat.
template <typename S>
using NoisePredictor = std::function<std::vector<S>(std::span<const S>, int, std::optional<int>)>;

/// Monte-Carlo estimate of the noise-prediction objective: for every row draw
/// t ~ U{1..T} and eps ~ N(0, I), sum squared error over time, average over rows.
template <typename S>
double training_loss(const ScenarioBatch& batch, const NoisePredictor<S>& predictor, const DiffusionSchedule& sched,
                     Rng& rng) {
  if (batch.size() == 0) throw std::invalid_argument("training_loss: empty batch");
  std::uniform_int_distribution<int> step(1, sched.steps());
  const auto len = static_cast<std::size_t>(batch.length());
  std::vector<S> x0(len);
  double total = 0.0;
  for (Eigen::Index r = 0; r < batch.size(); ++r) {
    for (std::size_t i = 0; i < len; ++i) x0[i] = static_cast<S>(batch.values(r, static_cast<Eigen::Index>(i)));
    const int t = step(rng);
    const auto eps = standard_normal<S>(len, rng);
    const auto xt = forward_sample<S>(x0, t, eps, sched);
    std::optional<int> label;
    if (batch.conditional()) label = batch.labels[static_cast<std::size_t>(r)];
    const auto eps_hat = predictor(xt, t, label);
    double sq = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const double d = static_cast<double>(eps[i]) - static_cast<double>(eps_hat[i]);
      sq += d * d;
    }
    total += sq;
  }
  return total / static_cast<double>(batch.size());
}

template <typename S>
double training_loss(const ScenarioBatch& batch, const DenoiserModel<S>& model, const DiffusionSchedule& sched,
                     Rng& rng) {
  NoisePredictor<S> fn = [&](std::span<const S> xt, int t, std::optional<int> label) {
    return predict_noise(xt, t, label, model);
  };
  return training_loss(batch, fn, sched, rng);
}

/// Loss of one minibatch and its gradient, accumulated into `grad` (zeroed first).
template <typename S>
double minibatch_gradient(const ScenarioBatch& data, std::span<const Eigen::Index> rows, const DenoiserModel<S>& model,
                          const DiffusionSchedule& sched, Rng& rng, DenoiserModel<S>& grad,
                          ForwardCache<S>& cache) {
  grad.set_zero();
  std::uniform_int_distribution<int> step(1, sched.steps());
  const auto len = static_cast<std::size_t>(data.length());
  const S inv_batch = S(1) / static_cast<S>(rows.size());
  std::vector<S> x0(len);
  Vector<S> d_out(static_cast<Eigen::Index>(len));
  double total = 0.0;
  for (const Eigen::Index r : rows) {
    for (std::size_t i = 0; i < len; ++i) x0[i] = static_cast<S>(data.values(r, static_cast<Eigen::Index>(i)));
    const int t = step(rng);
    const auto eps = standard_normal<S>(len, rng);
    const auto xt = forward_sample<S>(x0, t, eps, sched);
    std::optional<int> label;
    if (data.conditional()) label = data.labels[static_cast<std::size_t>(r)];
    const auto& eps_hat = forward(model, std::span<const S>(xt), t, label, cache);
    double sq = 0.0;
    for (std::size_t i = 0; i < len; ++i) {
      const S diff = eps_hat(static_cast<Eigen::Index>(i)) - eps[i];
      sq += static_cast<double>(diff) * static_cast<double>(diff);
      d_out(static_cast<Eigen::Index>(i)) = S(2) * diff * inv_batch;
    }
    total += sq;
    backward(model, cache, label, d_out, grad);
  }
  return total / static_cast<double>(rows.size());
}

using EpochCallback = std::function<void(int epoch, double loss)>;

/// Minibatch Adam on the noise-prediction loss with epoch-level early stopping.
///
/// An epoch improves on the best one only if its mean loss is lower and the
/// parameters changed since the best epoch; a frozen model (zero learning
/// rate) therefore plateaus immediately.
template <typename S>
TrainResult train(const ScenarioBatch& data, DenoiserModel<S>& model, const DiffusionSchedule& sched,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {}) {
  cfg.validate();
  data.validate();
  if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
  if (data.length() != model.config.length)
    throw std::invalid_argument("train: dataset length " + std::to_string(data.length()) +
                                " does not match network length " + std::to_string(model.config.length));
  if (data.conditional() != model.config.conditional)
    throw std::invalid_argument("train: dataset labels do not match the network's conditioning mode");

  Rng rng = derive_stream(cfg.seed, stage::kTrain);
  Adam<S> optimizer(AdamOptions{.learning_rate = cfg.learning_rate, .clip_norm = cfg.clip_norm});
  DenoiserModel<S> grad(model.config);
  DenoiserModel<S> best = model;
  ForwardCache<S> cache;

  std::vector<Eigen::Index> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  TrainResult result;
  double best_loss = std::numeric_limits<double>::infinity();
  int since_best = 0;
  const auto batch = static_cast<std::size_t>(cfg.batch_size);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    optimizer.set_learning_rate(cfg.epoch_learning_rate(epoch));
    double sum = 0.0;
    bool changed = false;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t count = std::min(batch, order.size() - start);
      const std::span<const Eigen::Index> rows(order.data() + start, count);
      const double loss = minibatch_gradient(data, rows, model, sched, rng, grad, cache);
      if (!std::isfinite(loss)) throw TrainingDiverged(epoch, loss);
      sum += loss * static_cast<double>(count);
      if (cfg.learning_rate > 0.0) {
        optimizer.step(model, grad);
        changed = true;
      }
    }
    const double epoch_loss = sum / static_cast<double>(order.size());
    if (!std::isfinite(epoch_loss) || !model.all_finite()) throw TrainingDiverged(epoch, epoch_loss);
    result.loss_history.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss);

    if (epoch_loss < best_loss && (changed || result.best_epoch == 0)) {
      best_loss = epoch_loss;
      result.best_epoch = epoch;
      best = model;
      since_best = 0;
    } else if (++since_best >= cfg.early_stop_patience) {
      result.stopped_early = epoch < cfg.epochs;
      break;
    }
  }
  model = std::move(best);
  return result;
}

/// Ancestral sampling with an arbitrary predictor; returns normalized rows.
/// Row j draws from its own stream derived from (seed, j). Final values are
/// clipped to the normalized range [-1, 1].
template <typename S>
RowMatrix sample_normalized(const NoisePredictor<S>& predictor, const DiffusionSchedule& sched, int count, int length,
                            std::optional<int> label, std::uint64_t seed) {
  if (count < 0) throw std::invalid_argument("sample: negative count");
  RowMatrix out(count, length);
  const auto len = static_cast<std::size_t>(length);
  for (int j = 0; j < count; ++j) {
    Rng rng = derive_stream(seed, stage::kSample, static_cast<std::uint64_t>(j));
    auto x = standard_normal<S>(len, rng);
    std::vector<S> z(len);
    for (int t = sched.steps(); t >= 1; --t) {
      const auto eps_hat = predictor(x, t, label);
      if (t > 1) fill_normal<S>(z, rng);
      else std::fill(z.begin(), z.end(), S(0));
      x = reverse_step<S>(x, eps_hat, t, z, sched);
    }
    for (std::size_t i = 0; i < len; ++i)
      out(j, static_cast<Eigen::Index>(i)) = std::clamp(static_cast<double>(x[i]), -1.0, 1.0);
  }
  return out;
}

/// Draws `count` scenarios in data units.
template <typename S>
ScenarioBatch sample(const DenoiserModel<S>& model, const DiffusionSchedule& sched, int count,
                     std::optional<int> label, std::uint64_t seed, const NormalizationRecord& record) {
  detail::check_label(model.config, label);
  ForwardCache<S> cache;
  NoisePredictor<S> fn = [&](std::span<const S> xt, int t, std::optional<int> lab) {
    const auto& out = forward(model, xt, t, lab, cache);
    return std::vector<S>(out.data(), out.data() + out.size());
  };
  ScenarioBatch batch;
  batch.values = denormalize(sample_normalized(fn, sched, count, model.config.length, label, seed), record);
  if (label) batch.labels.assign(static_cast<std::size_t>(count), *label);
  return batch;
}

}  // namespace diffcharge
