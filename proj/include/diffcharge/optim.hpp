// Adam with global-norm gradient clipping over a DenoiserModel-shaped parameter set.
#pragma once

#include "diffcharge/lstm.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace diffcharge {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 1.0;  // <= 0 disables clipping
};

template <typename S>
class Adam {
 public:
  explicit Adam(AdamOptions opts = {}) : opts_(opts) {}

  /// Applies one update; returns the pre-clipping global gradient norm.
  template <typename Params>
  double step(Params& params, Params& grads) {
    std::vector<Matrix<S>*> p;
    std::vector<Matrix<S>*> g;
    params.for_each_parameter([&](const std::string&, Matrix<S>& m) { p.push_back(&m); });
    grads.for_each_parameter([&](const std::string&, Matrix<S>& m) { g.push_back(&m); });
    if (m_.empty()) {
      for (auto* x : p) {
        m_.push_back(Matrix<S>::Zero(x->rows(), x->cols()));
        v_.push_back(Matrix<S>::Zero(x->rows(), x->cols()));
      }
    }

    double sq = 0.0;
    for (auto* x : g) sq += static_cast<double>(x->squaredNorm());
    const double norm = std::sqrt(sq);
    const double clip = (opts_.clip_norm > 0.0 && norm > opts_.clip_norm) ? opts_.clip_norm / norm : 1.0;

    ++t_;
    const double c1 = 1.0 - std::pow(opts_.beta1, t_);
    const double c2 = 1.0 - std::pow(opts_.beta2, t_);
    const S lr = static_cast<S>(opts_.learning_rate * std::sqrt(c2) / c1);
    const S b1 = static_cast<S>(opts_.beta1);
    const S b2 = static_cast<S>(opts_.beta2);
    const S eps = static_cast<S>(opts_.epsilon * std::sqrt(c2));
    for (std::size_t i = 0; i < p.size(); ++i) {
      const auto grad = (g[i]->array() * static_cast<S>(clip)).eval();
      m_[i].array() = b1 * m_[i].array() + (S(1) - b1) * grad;
      v_[i].array() = b2 * v_[i].array() + (S(1) - b2) * grad.square();
      p[i]->array() -= lr * m_[i].array() / (v_[i].array().sqrt() + eps);
    }
    return norm;
  }

  [[nodiscard]] const AdamOptions& options() const { return opts_; }
  void set_learning_rate(double lr) { opts_.learning_rate = lr; }

 private:
  AdamOptions opts_;
  std::vector<Matrix<S>> m_;
  std::vector<Matrix<S>> v_;
  long t_ = 0;
};

}  // namespace diffcharge
