// Single-layer LSTM with truncation-free backpropagation through time.
//
// Sequences are stored column-per-time-step: an input of width I and length L
// is an I x L matrix. Gate rows are ordered input, forget, cell, output.
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace diffcharge {

template <typename S>
using Matrix = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vector = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <typename S>
struct LstmParams {
  Matrix<S> w_input;   // 4H x I
  Matrix<S> w_hidden;  // 4H x H
  Matrix<S> bias;      // 4H x 1

  LstmParams() = default;
  LstmParams(int input_width, int hidden_width)
      : w_input(Matrix<S>::Zero(4 * hidden_width, input_width)),
        w_hidden(Matrix<S>::Zero(4 * hidden_width, hidden_width)),
        bias(Matrix<S>::Zero(4 * hidden_width, 1)) {}

  [[nodiscard]] int hidden_width() const { return static_cast<int>(w_hidden.cols()); }
  [[nodiscard]] int input_width() const { return static_cast<int>(w_input.cols()); }

  template <typename Fn>
  void for_each(Fn&& fn, const std::string& prefix) {
    fn(prefix + ".w_input", w_input);
    fn(prefix + ".w_hidden", w_hidden);
    fn(prefix + ".bias", bias);
  }

  /// Uniform(-1/sqrt(H), 1/sqrt(H)) weights; forget-gate bias starts at 1.
  template <typename Gen>
  void initialize(Gen& rng) {
    const int h = hidden_width();
    const double bound = 1.0 / std::sqrt(static_cast<double>(h));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto* m : {&w_input, &w_hidden, &bias})
      for (Eigen::Index i = 0; i < m->size(); ++i) m->data()[i] = static_cast<S>(dist(rng));
    bias.block(h, 0, h, 1).setConstant(S(1));
  }
};

template <typename S>
struct LstmCache {
  Matrix<S> input;   // I x L
  Matrix<S> gates;   // 4H x L, post-activation
  Matrix<S> cells;   // H x L
  Matrix<S> hidden;  // H x L
};

namespace detail {
template <typename S>
inline S sigmoid(S x) {
  return S(1) / (S(1) + std::exp(-x));
}
}  // namespace detail

/// Runs the recurrence left to right from a zero state; returns H x L hidden states.
template <typename S>
const Matrix<S>& lstm_forward(const LstmParams<S>& p, const Matrix<S>& input, LstmCache<S>& cache) {
  const int h = p.hidden_width();
  const Eigen::Index len = input.cols();
  if (input.rows() != p.input_width()) throw std::invalid_argument("lstm_forward: input width mismatch");

  cache.input = input;
  cache.gates.noalias() = p.w_input * input;
  cache.gates.colwise() += p.bias.col(0);
  cache.cells.resize(h, len);
  cache.hidden.resize(h, len);

  Vector<S> prev_h = Vector<S>::Zero(h);
  Vector<S> prev_c = Vector<S>::Zero(h);
  for (Eigen::Index i = 0; i < len; ++i) {
    auto g = cache.gates.col(i);
    g.noalias() += p.w_hidden * prev_h;
    for (int k = 0; k < h; ++k) {
      g(k) = detail::sigmoid(g(k));
      g(h + k) = detail::sigmoid(g(h + k));
      g(2 * h + k) = std::tanh(g(2 * h + k));
      g(3 * h + k) = detail::sigmoid(g(3 * h + k));
      const S c = g(h + k) * prev_c(k) + g(k) * g(2 * h + k);
      cache.cells(k, i) = c;
      cache.hidden(k, i) = g(3 * h + k) * std::tanh(c);
    }
    prev_h = cache.hidden.col(i);
    prev_c = cache.cells.col(i);
  }
  return cache.hidden;
}

/// Accumulates parameter gradients into `grad` given dLoss/dHidden (H x L).
/// When `d_input` is non-null it receives dLoss/dInput (I x L).
template <typename S>
void lstm_backward(const LstmParams<S>& p, const LstmCache<S>& cache, const Matrix<S>& d_hidden,
                   LstmParams<S>& grad, Matrix<S>* d_input = nullptr) {
  const int h = p.hidden_width();
  const Eigen::Index len = cache.hidden.cols();
  Matrix<S> d_pre(4 * h, len);
  Vector<S> dh_next = Vector<S>::Zero(h);
  Vector<S> dc_next = Vector<S>::Zero(h);

  for (Eigen::Index i = len - 1; i >= 0; --i) {
    const auto g = cache.gates.col(i);
    for (int k = 0; k < h; ++k) {
      const S dh = d_hidden(k, i) + dh_next(k);
      const S c = cache.cells(k, i);
      const S tc = std::tanh(c);
      const S c_prev = i > 0 ? cache.cells(k, i - 1) : S(0);
      const S gi = g(k), gf = g(h + k), gg = g(2 * h + k), go = g(3 * h + k);
      const S dc = dh * go * (S(1) - tc * tc) + dc_next(k);
      d_pre(k, i) = dc * gg * gi * (S(1) - gi);
      d_pre(h + k, i) = dc * c_prev * gf * (S(1) - gf);
      d_pre(2 * h + k, i) = dc * gi * (S(1) - gg * gg);
      d_pre(3 * h + k, i) = dh * tc * go * (S(1) - go);
      dc_next(k) = dc * gf;
    }
    dh_next.noalias() = p.w_hidden.transpose() * d_pre.col(i);
  }

  grad.w_input.noalias() += d_pre * cache.input.transpose();
  if (len > 1)
    grad.w_hidden.noalias() += d_pre.rightCols(len - 1) * cache.hidden.leftCols(len - 1).transpose();
  grad.bias.col(0) += d_pre.rowwise().sum();
  if (d_input != nullptr) d_input->noalias() = p.w_input.transpose() * d_pre;
}

}  // namespace diffcharge
