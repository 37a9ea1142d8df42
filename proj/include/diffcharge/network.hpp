// Noise predictor: LSTM encoder, broadcast fusion of condition and step
// embeddings, multi-head self-attention, and a per-time-step linear readout.
#pragma once

#include "diffcharge/lstm.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace diffcharge {

struct NetworkConfig {
  int length = 720;       // L
  int hidden = 48;        // H
  int heads = 4;          // B
  int head_width = 48;    // d_b
  bool conditional = false;
  int labels = 0;         // condition vocabulary size

  [[nodiscard]] int attention_width() const { return heads * head_width; }  // D

  void validate() const {
    if (length < 2) throw std::invalid_argument("network length must be >= 2");
    if (hidden < 2 || hidden % 2 != 0) throw std::invalid_argument("hidden width must be even and >= 2");
    if (heads < 1 || head_width < 1) throw std::invalid_argument("attention heads and head width must be positive");
    if (conditional && labels < 1) throw std::invalid_argument("conditional network needs at least one label");
    if (!conditional && labels != 0) throw std::invalid_argument("unconditional network takes no labels");
  }

  bool operator==(const NetworkConfig&) const = default;
};

/// Sinusoidal embedding of a diffusion step: (sin, cos) pairs at geometric frequencies.
template <typename S = double>
Vector<S> step_embedding(int t, int width) {
  if (width % 2 != 0) throw std::invalid_argument("step embedding width must be even");
  if (t < 1) throw std::invalid_argument("step embedding needs t >= 1");
  Vector<S> out(width);
  for (int j = 0; j < width / 2; ++j) {
    const double angle = static_cast<double>(t) / std::pow(10000.0, 2.0 * j / width);
    out(2 * j) = static_cast<S>(std::sin(angle));
    out(2 * j + 1) = static_cast<S>(std::cos(angle));
  }
  return out;
}

/// All learned parameters of the noise predictor. Also used as a gradient
/// accumulator of identical shape.
template <typename S>
struct DenoiserModel {
  NetworkConfig config;
  LstmParams<S> encoder;
  Matrix<S> condition;   // H x labels (empty when unconditional)
  Matrix<S> w_query;     // H x D, head b owns columns [b*d_b, (b+1)*d_b)
  Matrix<S> w_key;       // H x D
  Matrix<S> w_value;     // H x D
  Matrix<S> w_out;       // D x D
  Matrix<S> w_proj;      // D x 1
  Matrix<S> proj_bias;   // 1 x 1

  DenoiserModel() = default;
  explicit DenoiserModel(const NetworkConfig& cfg) : config(cfg), encoder(1, cfg.hidden) {
    cfg.validate();
    const int h = cfg.hidden;
    const int d = cfg.attention_width();
    condition = Matrix<S>::Zero(h, cfg.conditional ? cfg.labels : 0);
    w_query = Matrix<S>::Zero(h, d);
    w_key = Matrix<S>::Zero(h, d);
    w_value = Matrix<S>::Zero(h, d);
    w_out = Matrix<S>::Zero(d, d);
    w_proj = Matrix<S>::Zero(d, 1);
    proj_bias = Matrix<S>::Zero(1, 1);
  }

  template <typename Fn>
  void for_each_parameter(Fn&& fn) {
    encoder.for_each(fn, "encoder");
    if (config.conditional) fn(std::string("condition.embedding"), condition);
    fn(std::string("attention.w_query"), w_query);
    fn(std::string("attention.w_key"), w_key);
    fn(std::string("attention.w_value"), w_value);
    fn(std::string("attention.w_out"), w_out);
    fn(std::string("readout.weight"), w_proj);
    fn(std::string("readout.bias"), proj_bias);
  }
  template <typename Fn>
  void for_each_parameter(Fn&& fn) const {
    const_cast<DenoiserModel*>(this)->for_each_parameter(
        [&](const std::string& name, Matrix<S>& m) { fn(name, static_cast<const Matrix<S>&>(m)); });
  }

  [[nodiscard]] std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_parameter([&](const std::string&, const Matrix<S>& m) { n += static_cast<std::size_t>(m.size()); });
    return n;
  }

  void set_zero() {
    for_each_parameter([](const std::string&, Matrix<S>& m) { m.setZero(); });
  }

  [[nodiscard]] bool all_finite() const {
    bool ok = true;
    for_each_parameter([&](const std::string&, const Matrix<S>& m) { ok = ok && m.allFinite(); });
    return ok;
  }

  template <typename T>
  [[nodiscard]] DenoiserModel<T> cast() const {
    DenoiserModel<T> out(config);
    std::vector<const Matrix<S>*> src;
    for_each_parameter([&](const std::string&, const Matrix<S>& m) { src.push_back(&m); });
    std::size_t i = 0;
    out.for_each_parameter([&](const std::string&, Matrix<T>& m) { m = src[i++]->template cast<T>(); });
    return out;
  }

  /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every linear map.
  template <typename Gen>
  void initialize(Gen& rng) {
    encoder.initialize(rng);
    auto fill = [&](Matrix<S>& m, int fan_in) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(dist(rng));
    };
    const int h = config.hidden;
    const int d = config.attention_width();
    if (config.conditional) fill(condition, config.labels);
    fill(w_query, h);
    fill(w_key, h);
    fill(w_value, h);
    fill(w_out, d);
    fill(w_proj, d);
    fill(proj_bias, d);
  }
};

/// Intermediate activations of one forward pass, kept for backpropagation.
template <typename S>
struct ForwardCache {
  LstmCache<S> lstm;
  Matrix<S> fused;               // L x H
  Matrix<S> query, key, value;   // L x D
  std::vector<Matrix<S>> probs;  // per head, L x L attention weights
  Matrix<S> concat;              // L x D
  Matrix<S> attended;            // L x D
  Vector<S> output;              // L
};

template <typename S>
Matrix<S> encode_sequence(std::span<const S> xt, const DenoiserModel<S>& model, LstmCache<S>& cache) {
  if (static_cast<int>(xt.size()) != model.config.length)
    throw std::invalid_argument("encode_sequence: expected length " + std::to_string(model.config.length) + ", got " +
                                std::to_string(xt.size()));
  Matrix<S> input = Eigen::Map<const Matrix<S>>(xt.data(), 1, static_cast<Eigen::Index>(xt.size()));
  return lstm_forward(model.encoder, input, cache).transpose();
}

/// Returns the L x H hidden states of the encoder.
template <typename S>
Matrix<S> encode_sequence(std::span<const S> xt, const DenoiserModel<S>& model) {
  LstmCache<S> cache;
  return encode_sequence(xt, model, cache);
}

/// Adds the condition (if any) and step embeddings to every row.
template <typename S>
Matrix<S> broadcast_fuse(const Matrix<S>& hidden, const std::optional<Vector<S>>& condition,
                         const Vector<S>& step) {
  if (step.size() != hidden.cols() || (condition && condition->size() != hidden.cols()))
    throw std::invalid_argument("broadcast_fuse: embedding width mismatch");
  Vector<S> shift = step;
  if (condition) shift += *condition;
  Matrix<S> fused = hidden;
  fused.rowwise() += shift.transpose();
  return fused;
}

namespace detail {
template <typename S>
void softmax_rows(Matrix<S>& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    const S mx = row.maxCoeff();
    row = (row.array() - mx).exp();
    row /= row.sum();
  }
}
}  // namespace detail

template <typename S>
Matrix<S> self_attention(const Matrix<S>& fused, const DenoiserModel<S>& model, ForwardCache<S>& cache) {
  const auto& cfg = model.config;
  if (fused.cols() != cfg.hidden) throw std::invalid_argument("self_attention: width mismatch");
  const int db = cfg.head_width;
  const S scale = S(1) / std::sqrt(static_cast<S>(db));
  const Eigen::Index len = fused.rows();

  cache.query.noalias() = fused * model.w_query;
  cache.key.noalias() = fused * model.w_key;
  cache.value.noalias() = fused * model.w_value;
  cache.probs.resize(static_cast<std::size_t>(cfg.heads));
  cache.concat.resize(len, cfg.attention_width());
  for (int b = 0; b < cfg.heads; ++b) {
    auto& p = cache.probs[static_cast<std::size_t>(b)];
    p.noalias() = cache.query.middleCols(b * db, db) * cache.key.middleCols(b * db, db).transpose();
    p *= scale;
    detail::softmax_rows(p);
    cache.concat.middleCols(b * db, db).noalias() = p * cache.value.middleCols(b * db, db);
  }
  cache.attended.noalias() = cache.concat * model.w_out;
  return cache.attended;
}

/// L x D multi-head attention output for a fused feature matrix.
template <typename S>
Matrix<S> self_attention(const Matrix<S>& fused, const DenoiserModel<S>& model) {
  ForwardCache<S> cache;
  return self_attention(fused, model, cache);
}

namespace detail {
inline void check_label(const NetworkConfig& cfg, std::optional<int> label) {
  if (cfg.conditional && !label) throw std::invalid_argument("conditional model requires a label");
  if (!cfg.conditional && label) throw std::invalid_argument("unconditional model takes no label");
  if (label && (*label < 0 || *label >= cfg.labels))
    throw std::out_of_range("label " + std::to_string(*label) + " outside vocabulary of " + std::to_string(cfg.labels));
}
}  // namespace detail

/// Full forward pass, filling `cache` for a later call to `backward`.
template <typename S>
const Vector<S>& forward(const DenoiserModel<S>& model, std::span<const S> xt, int t, std::optional<int> label,
                         ForwardCache<S>& cache) {
  detail::check_label(model.config, label);
  const Matrix<S> hidden = encode_sequence(xt, model, cache.lstm);
  std::optional<Vector<S>> cond;
  if (label) cond = model.condition.col(*label);
  cache.fused = broadcast_fuse(hidden, cond, step_embedding<S>(t, model.config.hidden));
  self_attention(cache.fused, model, cache);
  cache.output.noalias() = cache.attended * model.w_proj.col(0);
  cache.output.array() += model.proj_bias(0, 0);
  return cache.output;
}

template <typename S>
std::vector<S> predict_noise(std::span<const S> xt, int t, std::optional<int> label, const DenoiserModel<S>& model) {
  ForwardCache<S> cache;
  const auto& out = forward(model, xt, t, label, cache);
  return std::vector<S>(out.data(), out.data() + out.size());
}

/// Accumulates dLoss/dParams into `grad` given dLoss/dOutput for the pass in `cache`.
template <typename S>
void backward(const DenoiserModel<S>& model, const ForwardCache<S>& cache, std::optional<int> label,
              const Vector<S>& d_output, DenoiserModel<S>& grad) {
  const auto& cfg = model.config;
  const int db = cfg.head_width;
  const S scale = S(1) / std::sqrt(static_cast<S>(db));

  grad.w_proj.col(0).noalias() += cache.attended.transpose() * d_output;
  grad.proj_bias(0, 0) += d_output.sum();
  const Matrix<S> d_attended = d_output * model.w_proj.col(0).transpose();  // L x D

  grad.w_out.noalias() += cache.concat.transpose() * d_attended;
  const Matrix<S> d_concat = d_attended * model.w_out.transpose();

  const Eigen::Index len = cache.fused.rows();
  Matrix<S> d_query(len, cfg.attention_width());
  Matrix<S> d_key(len, cfg.attention_width());
  Matrix<S> d_value(len, cfg.attention_width());
  Matrix<S> d_probs;
  for (int b = 0; b < cfg.heads; ++b) {
    const auto& p = cache.probs[static_cast<std::size_t>(b)];
    const auto d_head = d_concat.middleCols(b * db, db);
    d_value.middleCols(b * db, db).noalias() = p.transpose() * d_head;
    d_probs.noalias() = d_head * cache.value.middleCols(b * db, db).transpose();
    // softmax Jacobian, row by row
    const Vector<S> inner = (d_probs.array() * p.array()).rowwise().sum();
    d_probs = (p.array() * (d_probs.colwise() - inner).array()) * scale;
    d_query.middleCols(b * db, db).noalias() = d_probs * cache.key.middleCols(b * db, db);
    d_key.middleCols(b * db, db).noalias() = d_probs.transpose() * cache.query.middleCols(b * db, db);
  }

  grad.w_query.noalias() += cache.fused.transpose() * d_query;
  grad.w_key.noalias() += cache.fused.transpose() * d_key;
  grad.w_value.noalias() += cache.fused.transpose() * d_value;
  Matrix<S> d_fused = d_query * model.w_query.transpose();
  d_fused.noalias() += d_key * model.w_key.transpose();
  d_fused.noalias() += d_value * model.w_value.transpose();

  if (label) grad.condition.col(*label) += d_fused.colwise().sum().transpose();
  lstm_backward(model.encoder, cache.lstm, Matrix<S>(d_fused.transpose()), grad.encoder);
}

}  // namespace diffcharge
