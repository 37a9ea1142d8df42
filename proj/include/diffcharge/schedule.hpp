// Noise schedule and closed-form statistics of the forward/reverse diffusion chains.
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace diffcharge {

/// Precomputed per-step tables for a quadratic variance schedule.
///
/// Steps are 1-based everywhere in the public API: `beta(1)` is the first
/// forward variance and `beta(T)` the last. `alpha_bar(0)` is defined as 1 so
/// the posterior variance at the first step is exactly zero.
class DiffusionSchedule {
 public:
  DiffusionSchedule(int steps, double beta_first, double beta_last) {
    if (steps < 2) throw std::invalid_argument("schedule needs at least 2 steps, got " + std::to_string(steps));
    if (!(beta_first > 0.0 && beta_last < 1.0))
      throw std::invalid_argument("schedule endpoints must lie in (0, 1)");
    if (!(beta_first <= beta_last))
      throw std::invalid_argument("schedule endpoints must satisfy beta_1 <= beta_T");

    steps_ = steps;
    beta_.resize(steps);
    alpha_bar_.resize(steps);
    beta_tilde_.resize(steps);

    const double lo = std::sqrt(beta_first);
    const double hi = std::sqrt(beta_last);
    const double span = static_cast<double>(steps - 1);
    for (int t = 1; t <= steps; ++t) {
      const double root = (static_cast<double>(steps - t) / span) * lo + (static_cast<double>(t - 1) / span) * hi;
      beta_[t - 1] = root * root;
    }
    // Endpoints are returned verbatim rather than re-squared.
    beta_.front() = beta_first;
    beta_.back() = beta_last;

    double running = 1.0;
    for (int t = 1; t <= steps; ++t) {
      const double prev = running;
      running *= 1.0 - beta_[t - 1];
      alpha_bar_[t - 1] = running;
      beta_tilde_[t - 1] = (1.0 - prev) / (1.0 - running) * beta_[t - 1];
    }
  }

  [[nodiscard]] int steps() const noexcept { return steps_; }

  [[nodiscard]] double beta(int t) const { return beta_[index(t)]; }
  [[nodiscard]] double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bar_[index(t)]; }
  [[nodiscard]] double beta_tilde(int t) const { return beta_tilde_[index(t)]; }

  [[nodiscard]] const std::vector<double>& betas() const noexcept { return beta_; }
  [[nodiscard]] const std::vector<double>& alpha_bars() const noexcept { return alpha_bar_; }
  [[nodiscard]] const std::vector<double>& beta_tildes() const noexcept { return beta_tilde_; }

  void check_step(int t, int first = 1) const {
    if (t < first || t > steps_)
      throw std::out_of_range("diffusion step " + std::to_string(t) + " outside [" + std::to_string(first) + ", " +
                              std::to_string(steps_) + "]");
  }

 private:
  [[nodiscard]] std::size_t index(int t) const {
    check_step(t);
    return static_cast<std::size_t>(t - 1);
  }

  int steps_ = 0;
  std::vector<double> beta_;
  std::vector<double> alpha_bar_;
  std::vector<double> beta_tilde_;
};

inline DiffusionSchedule build_schedule(int steps, double beta_first, double beta_last) {
  return DiffusionSchedule(steps, beta_first, beta_last);
}

namespace detail {
inline void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b)
    throw std::invalid_argument(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " +
                                std::to_string(b) + ")");
}
}  // namespace detail

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps.
template <typename T>
std::vector<T> forward_sample(std::span<const T> x0, int t, std::span<const T> eps, const DiffusionSchedule& sched) {
  detail::require_same_length(x0.size(), eps.size(), "forward_sample");
  sched.check_step(t);
  const double abar = sched.alpha_bar(t);
  const T signal = static_cast<T>(std::sqrt(abar));
  const T noise = static_cast<T>(std::sqrt(1.0 - abar));
  std::vector<T> out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = signal * x0[i] + noise * eps[i];
  return out;
}

/// Mean of q(x_{t-1} | x_t, x_0); defined for 2 <= t <= T.
template <typename T>
std::vector<T> posterior_mean_from_x0(std::span<const T> x0, std::span<const T> xt, int t,
                                      const DiffusionSchedule& sched) {
  detail::require_same_length(x0.size(), xt.size(), "posterior_mean_from_x0");
  sched.check_step(t, 2);
  const double abar = sched.alpha_bar(t);
  const double abar_prev = sched.alpha_bar(t - 1);
  const double beta = sched.beta(t);
  const T c0 = static_cast<T>(std::sqrt(abar_prev) * beta / (1.0 - abar));
  const T ct = static_cast<T>(std::sqrt(1.0 - beta) * (1.0 - abar_prev) / (1.0 - abar));
  std::vector<T> out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = c0 * x0[i] + ct * xt[i];
  return out;
}

/// Mean of the reverse step written in terms of a noise estimate.
template <typename T>
std::vector<T> posterior_mean_from_eps(std::span<const T> xt, std::span<const T> eps_hat, int t,
                                       const DiffusionSchedule& sched) {
  detail::require_same_length(xt.size(), eps_hat.size(), "posterior_mean_from_eps");
  sched.check_step(t);
  const double beta = sched.beta(t);
  const T scale = static_cast<T>(1.0 / std::sqrt(1.0 - beta));
  const T coef = static_cast<T>(beta / std::sqrt(1.0 - sched.alpha_bar(t)));
  std::vector<T> out(xt.size());
  for (std::size_t i = 0; i < xt.size(); ++i) out[i] = scale * (xt[i] - coef * eps_hat[i]);
  return out;
}

/// One ancestral sampling step. The noise term is dropped at t = 1.
template <typename T>
std::vector<T> reverse_step(std::span<const T> xt, std::span<const T> eps_hat, int t, std::span<const T> z,
                            const DiffusionSchedule& sched) {
  detail::require_same_length(xt.size(), z.size(), "reverse_step");
  auto out = posterior_mean_from_eps(xt, eps_hat, t, sched);
  if (t > 1) {
    const T sigma = static_cast<T>(std::sqrt(sched.beta_tilde(t)));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += sigma * z[i];
  }
  return out;
}

}  // namespace diffcharge
