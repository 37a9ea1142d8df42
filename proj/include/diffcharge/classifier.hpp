// Post-hoc real-vs-generated sequence classifier: two stacked LSTM layers,
// mean pooling over time, and a linear logit head trained with binary
// cross-entropy.
#pragma once

#include "diffcharge/lstm.hpp"
#include "diffcharge/optim.hpp"
#include "diffcharge/random.hpp"

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

namespace diffcharge {

template <typename S>
struct SequenceClassifier {
  LstmParams<S> layer1;
  LstmParams<S> layer2;
  Matrix<S> head;       // H x 1
  Matrix<S> head_bias;  // 1 x 1

  SequenceClassifier() = default;
  explicit SequenceClassifier(int hidden)
      : layer1(1, hidden), layer2(hidden, hidden), head(Matrix<S>::Zero(hidden, 1)), head_bias(Matrix<S>::Zero(1, 1)) {}

  template <typename Fn>
  void for_each_parameter(Fn&& fn) {
    layer1.for_each(fn, "layer1");
    layer2.for_each(fn, "layer2");
    fn(std::string("head.weight"), head);
    fn(std::string("head.bias"), head_bias);
  }

  void set_zero() {
    for_each_parameter([](const std::string&, Matrix<S>& m) { m.setZero(); });
  }

  template <typename Gen>
  void initialize(Gen& rng) {
    layer1.initialize(rng);
    layer2.initialize(rng);
    const double bound = 1.0 / std::sqrt(static_cast<double>(head.rows()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (Eigen::Index i = 0; i < head.size(); ++i) head.data()[i] = static_cast<S>(dist(rng));
    head_bias(0, 0) = static_cast<S>(dist(rng));
  }
};

template <typename S>
struct ClassifierCache {
  LstmCache<S> first;
  LstmCache<S> second;
  Vector<S> pooled;
};

/// Logit that the sequence is real.
template <typename S>
S classifier_logit(const SequenceClassifier<S>& model, std::span<const S> seq, ClassifierCache<S>& cache) {
  Matrix<S> input = Eigen::Map<const Matrix<S>>(seq.data(), 1, static_cast<Eigen::Index>(seq.size()));
  const Matrix<S>& h1 = lstm_forward(model.layer1, input, cache.first);
  const Matrix<S>& h2 = lstm_forward(model.layer2, h1, cache.second);
  cache.pooled = h2.rowwise().mean();
  return cache.pooled.dot(model.head.col(0)) + model.head_bias(0, 0);
}

template <typename S>
void classifier_backward(const SequenceClassifier<S>& model, const ClassifierCache<S>& cache, S d_logit,
                         SequenceClassifier<S>& grad) {
  grad.head.col(0) += d_logit * cache.pooled;
  grad.head_bias(0, 0) += d_logit;
  const Eigen::Index len = cache.second.hidden.cols();
  const Vector<S> d_pooled = model.head.col(0) * (d_logit / static_cast<S>(len));
  Matrix<S> d_h2 = d_pooled.replicate(1, len);
  Matrix<S> d_h1;
  lstm_backward(model.layer2, cache.second, d_h2, grad.layer2, &d_h1);
  lstm_backward(model.layer1, cache.first, d_h1, grad.layer1);
}

/// Numerically stable binary cross-entropy of a logit against a 0/1 target.
inline double bce_with_logit(double logit, double target) {
  return std::max(logit, 0.0) - logit * target + std::log1p(std::exp(-std::abs(logit)));
}

struct ClassifierOptions {
  int hidden = 32;
  int epochs = 30;
  int batch_size = 16;
  double learning_rate = 1e-3;
};

/// Trains on (sequence, target) pairs and returns the model.
template <typename S>
SequenceClassifier<S> train_classifier(const std::vector<std::vector<S>>& seqs, const std::vector<int>& targets,
                                       const ClassifierOptions& opts, Rng& rng) {
  SequenceClassifier<S> model(opts.hidden);
  model.initialize(rng);
  SequenceClassifier<S> grad(opts.hidden);
  Adam<S> adam(AdamOptions{.learning_rate = opts.learning_rate, .clip_norm = 1.0});
  ClassifierCache<S> cache;
  std::vector<std::size_t> order(seqs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto batch = static_cast<std::size_t>(opts.batch_size);
  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      grad.set_zero();
      for (std::size_t k = start; k < end; ++k) {
        const auto i = order[k];
        const S logit = classifier_logit(model, std::span<const S>(seqs[i]), cache);
        const S p = S(1) / (S(1) + std::exp(-logit));
        classifier_backward(model, cache, (p - static_cast<S>(targets[i])) / static_cast<S>(end - start), grad);
      }
      adam.step(model, grad);
    }
  }
  return model;
}

}  // namespace diffcharge
