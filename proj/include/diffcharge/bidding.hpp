// Day-ahead charging-energy bidding: a box-constrained convex QP per EV,
// scenario reduction, and instance assembly from generated curves.
#pragma once

#include "diffcharge/csv.hpp"
#include "diffcharge/engine.hpp"
#include "diffcharge/kmeans.hpp"
#include "diffcharge/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace diffcharge {

struct BiddingInstance {
  RowMatrix demand;              // N x |T|, kW
  std::vector<double> price;     // |T|, $/kWh
  double penalty_price = 0.0;    // $/kWh applied to squared kW gaps
  double interval_hours = 5.0 / 60.0;
  std::vector<double> capacity;  // N, kW

  [[nodiscard]] Eigen::Index evs() const { return demand.rows(); }
  [[nodiscard]] Eigen::Index intervals() const { return demand.cols(); }

  void validate() const {
    if (demand.rows() == 0 || demand.cols() == 0) throw std::invalid_argument("bidding: empty instance");
    if (static_cast<Eigen::Index>(price.size()) != demand.cols())
      throw std::invalid_argument("bidding: price vector length does not match the interval count");
    if (static_cast<Eigen::Index>(capacity.size()) != demand.rows())
      throw std::invalid_argument("bidding: capacity vector length does not match the EV count");
    for (double p : price)
      if (!(p >= 0.0)) throw std::invalid_argument("bidding: negative or invalid price");
    for (double c : capacity)
      if (!(c >= 0.0)) throw std::invalid_argument("bidding: negative capacity");
    if (!(penalty_price >= 0.0) || !(interval_hours > 0.0)) throw std::invalid_argument("bidding: invalid penalty or interval");
    if (!(demand.array() >= 0.0).all()) throw std::invalid_argument("bidding: negative demand");
  }
};

struct BiddingCosts {
  double energy = 0.0;   // C_s
  double penalty = 0.0;  // C_u
  double total = 0.0;
  double tracking_gap = 0.0;  // G_f
  double energy_gap = 0.0;    // G_d
};

struct BiddingPlan {
  RowMatrix power;  // N x |T|, kW
  BiddingCosts costs;
  double residual = 0.0;  // worst relative projected-gradient residual over EVs
  long iterations = 0;    // summed over EVs
};

/// Costs of a fixed plan against the instance's demands.
inline BiddingCosts evaluate_plan(const RowMatrix& power, const BiddingInstance& inst) {
  if (power.rows() != inst.demand.rows() || power.cols() != inst.demand.cols())
    throw std::invalid_argument("evaluate_plan: plan shape does not match the instance");
  BiddingCosts c;
  for (Eigen::Index i = 0; i < power.cols(); ++i)
    c.energy += inst.price[static_cast<std::size_t>(i)] * power.col(i).sum() * inst.interval_hours;
  const RowMatrix gap = power - inst.demand;
  c.tracking_gap = gap.squaredNorm();
  c.energy_gap = gap.rowwise().sum().squaredNorm();
  c.penalty = (c.tracking_gap + c.energy_gap) * inst.penalty_price;
  c.total = c.energy + c.penalty;
  return c;
}

struct SolverOptions {
  double tolerance = 1e-7;
  long max_iterations = 5'000'000;
};

namespace detail {

struct EvProblem {
  Eigen::VectorXd linear;  // price * interval
  Eigen::VectorXd demand;
  double penalty = 0.0;
  double cap = 0.0;
};

inline Eigen::VectorXd ev_gradient(const EvProblem& pr, const Eigen::VectorXd& p) {
  const Eigen::VectorXd gap = p - pr.demand;
  return pr.linear + 2.0 * pr.penalty * (gap.array() + gap.sum()).matrix();
}

inline Eigen::VectorXd project(const Eigen::VectorXd& p, double cap) { return p.cwiseMax(0.0).cwiseMin(cap); }

struct EvSolution {
  Eigen::VectorXd power;
  double residual = 0.0;
  long iterations = 0;
};

/// Projected gradient with exact line search on
/// f(p) = linear.p + penalty * (|p - d|^2 + (sum(p - d))^2), 0 <= p <= cap.
inline EvSolution solve_ev(const EvProblem& pr, const SolverOptions& opts) {
  const auto n = pr.demand.size();
  EvSolution sol;
  if (pr.penalty == 0.0) {
    // linear objective: zero-cost intervals follow demand, the rest stay at zero
    sol.power = Eigen::VectorXd(n);
    for (Eigen::Index i = 0; i < n; ++i)
      sol.power(i) = pr.linear(i) > 0.0 ? 0.0 : std::clamp(pr.demand(i), 0.0, pr.cap);
    return sol;
  }
  const double lipschitz = 2.0 * pr.penalty * (1.0 + static_cast<double>(n));
  Eigen::VectorXd p = project(pr.demand, pr.cap);
  const double scale = std::max(1e-300, project(Eigen::VectorXd::Zero(n) - ev_gradient(pr, Eigen::VectorXd::Zero(n)), pr.cap)
                                            .cwiseAbs()
                                            .maxCoeff());
  for (long it = 0; it < opts.max_iterations; ++it) {
    const Eigen::VectorXd g = ev_gradient(pr, p);
    sol.residual = (p - project(p - g, pr.cap)).cwiseAbs().maxCoeff() / std::max(scale, pr.cap * 1e-12);
    sol.iterations = it;
    if (sol.residual < opts.tolerance) break;
    const Eigen::VectorXd dir = project(p - g / lipschitz, pr.cap) - p;
    const double curvature = 2.0 * pr.penalty * (dir.squaredNorm() + dir.sum() * dir.sum());
    if (!(curvature > 0.0)) break;
    const double step = std::clamp(-g.dot(dir) / curvature, 0.0, 1.0);
    p = project(p + step * dir, pr.cap);
  }
  sol.power = std::move(p);
  return sol;
}

}  // namespace detail

/// Minimizes energy cost plus penalty over the box 0 <= p <= cap. The
/// objective has no cross-EV coupling, so each EV is solved on its own.
inline BiddingPlan solve_bidding(const BiddingInstance& inst, const SolverOptions& opts = {}) {
  inst.validate();
  BiddingPlan plan;
  plan.power.resize(inst.evs(), inst.intervals());
  detail::EvProblem pr;
  pr.linear = Eigen::Map<const Eigen::VectorXd>(inst.price.data(), inst.intervals()) * inst.interval_hours;
  pr.penalty = inst.penalty_price;
  for (Eigen::Index n = 0; n < inst.evs(); ++n) {
    pr.demand = inst.demand.row(n).transpose();
    pr.cap = inst.capacity[static_cast<std::size_t>(n)];
    const auto sol = detail::solve_ev(pr, opts);
    plan.power.row(n) = sol.power.transpose();
    plan.residual = std::max(plan.residual, sol.residual);
    plan.iterations += sol.iterations;
  }
  plan.costs = evaluate_plan(plan.power, inst);
  return plan;
}

// ---------------------------------------------------------------------------
// Scenario reduction

struct ReducedScenarios {
  RowMatrix representatives;  // k medoid curves
  std::vector<int> weights;   // cluster sizes, summing to the input count
  std::vector<int> medoids;   // input row of each representative
};

inline ReducedScenarios reduce_scenarios(const RowMatrix& curves, int k, std::uint64_t seed) {
  if (curves.rows() < k) throw std::invalid_argument("reduce_scenarios: fewer curves than scenarios requested");
  const auto km = kmeans(curves, k, seed);
  ReducedScenarios out;
  out.representatives.resize(k, curves.cols());
  for (int c = 0; c < k; ++c) out.representatives.row(c) = curves.row(km.medoids[static_cast<std::size_t>(c)]);
  out.weights = km.counts;
  out.medoids = km.medoids;
  return out;
}

// ---------------------------------------------------------------------------
// Instance assembly

struct AssemblyOptions {
  double curve_resolution_minutes = 1.0;
  double interval_minutes = 5.0;
  int intervals = 288;
  double nominal_voltage = 208.0;  // curves in amps are converted with A * V / 1000
  bool curves_in_amps = true;
  double capacity_kw = 10.0;
  double penalty_factor = 0.8;             // times the maximum price
  std::optional<double> penalty_override;  // $/kWh, replaces the factor rule
};

/// Resamples a curve onto the interval grid (mean per interval) in kW.
inline std::vector<double> curve_to_intervals(std::span<const double> curve, const AssemblyOptions& opts) {
  const double ratio = opts.interval_minutes / opts.curve_resolution_minutes;
  const auto per = static_cast<long>(std::lround(ratio));
  if (per < 1 || std::abs(ratio - static_cast<double>(per)) > 1e-9)
    throw std::invalid_argument("curve resolution must divide the bidding interval");
  const double to_kw = opts.curves_in_amps ? opts.nominal_voltage / 1000.0 : 1.0;
  const auto bins = static_cast<std::size_t>((static_cast<long>(curve.size()) + per - 1) / per);
  std::vector<double> out(bins, 0.0);
  for (std::size_t i = 0; i < curve.size(); ++i) out[i / static_cast<std::size_t>(per)] += curve[i] * to_kw / per;
  return out;
}

/// Places curve `assignment[n]` at EV n's arrival minute on the day grid,
/// truncating at midnight. Prices must already be on the interval grid.
inline BiddingInstance assemble_instance(const RowMatrix& curves, const std::vector<int>& assignment,
                                         const std::vector<double>& arrival_minutes, const std::vector<double>& prices,
                                         const AssemblyOptions& opts = {}) {
  if (assignment.size() != arrival_minutes.size())
    throw std::invalid_argument("assemble_instance: one arrival per EV required");
  if (static_cast<int>(prices.size()) != opts.intervals)
    throw std::invalid_argument("assemble_instance: price vector does not cover the day grid");
  BiddingInstance inst;
  const auto evs = static_cast<Eigen::Index>(assignment.size());
  inst.demand = RowMatrix::Zero(evs, opts.intervals);
  inst.price = prices;
  inst.interval_hours = opts.interval_minutes / 60.0;
  inst.capacity.assign(static_cast<std::size_t>(evs), opts.capacity_kw);
  const double day = opts.intervals * opts.interval_minutes;
  for (Eigen::Index n = 0; n < evs; ++n) {
    const double arrival = arrival_minutes[static_cast<std::size_t>(n)];
    if (arrival < 0.0 || arrival >= day) throw std::invalid_argument("assemble_instance: arrival outside the day");
    const int row = assignment[static_cast<std::size_t>(n)];
    if (row < 0 || row >= curves.rows()) throw std::out_of_range("assemble_instance: curve index out of range");
    const auto placed =
        curve_to_intervals({curves.row(row).data(), static_cast<std::size_t>(curves.cols())}, opts);
    const auto start = static_cast<Eigen::Index>(std::floor(arrival / opts.interval_minutes));
    for (std::size_t i = 0; i < placed.size() && start + static_cast<Eigen::Index>(i) < opts.intervals; ++i)
      inst.demand(n, start + static_cast<Eigen::Index>(i)) = placed[i];
  }
  const double max_price = *std::max_element(prices.begin(), prices.end());
  inst.penalty_price = opts.penalty_override.value_or(opts.penalty_factor * max_price);
  return inst;
}

/// One instance per reduced scenario, in which every EV draws that scenario's
/// curve at its own arrival time.
inline std::vector<BiddingInstance> assemble_scenarios(const ReducedScenarios& reduced,
                                                       const std::vector<double>& arrival_minutes,
                                                       const std::vector<double>& prices,
                                                       const AssemblyOptions& opts = {}) {
  std::vector<BiddingInstance> out;
  for (Eigen::Index s = 0; s < reduced.representatives.rows(); ++s)
    out.push_back(assemble_instance(reduced.representatives,
                                    std::vector<int>(arrival_minutes.size(), static_cast<int>(s)), arrival_minutes,
                                    prices, opts));
  return out;
}

namespace detail {
inline void check_scenarios(const std::vector<BiddingInstance>& scenarios, const std::vector<int>& weights) {
  if (scenarios.empty() || scenarios.size() != weights.size())
    throw std::invalid_argument("bidding: one weight per scenario required");
  for (const auto& s : scenarios)
    if (s.demand.rows() != scenarios.front().demand.rows() || s.demand.cols() != scenarios.front().demand.cols())
      throw std::invalid_argument("bidding: scenario shapes differ");
  if (std::accumulate(weights.begin(), weights.end(), 0) <= 0 ||
      std::any_of(weights.begin(), weights.end(), [](int w) { return w < 0; }))
    throw std::invalid_argument("bidding: scenario weights must be non-negative with a positive sum");
}
}  // namespace detail

/// Single instance whose optimum is the plan minimizing the weight-averaged
/// cost over all scenarios. The penalty is quadratic in the demand, so the
/// expected cost differs from the cost against the mean demand only by a
/// constant.
inline BiddingInstance expected_instance(const std::vector<BiddingInstance>& scenarios, const std::vector<int>& weights) {
  detail::check_scenarios(scenarios, weights);
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  BiddingInstance out = scenarios.front();
  out.demand.setZero();
  for (std::size_t s = 0; s < scenarios.size(); ++s) out.demand += scenarios[s].demand * (weights[s] / total);
  return out;
}

/// Weight-averaged costs of one shared plan over the scenarios.
inline BiddingCosts expected_costs(const RowMatrix& power, const std::vector<BiddingInstance>& scenarios,
                                   const std::vector<int>& weights) {
  detail::check_scenarios(scenarios, weights);
  const double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  BiddingCosts out;
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    const auto c = evaluate_plan(power, scenarios[s]);
    const double w = weights[s] / total;
    out.energy += w * c.energy;
    out.penalty += w * c.penalty;
    out.tracking_gap += w * c.tracking_gap;
    out.energy_gap += w * c.energy_gap;
  }
  out.total = out.energy + out.penalty;
  return out;
}

/// Empirical arrival-time distribution in 30-min bins, sampled with replacement.
class ArrivalDistribution {
 public:
  explicit ArrivalDistribution(const std::vector<double>& minutes, double bin_minutes = 30.0, double day_minutes = 1440.0)
      : bin_(bin_minutes), counts_(static_cast<std::size_t>(std::ceil(day_minutes / bin_minutes)), 0.0) {
    if (minutes.empty()) throw std::invalid_argument("arrival distribution needs at least one observation");
    for (double m : minutes) {
      const auto b = std::clamp<long>(static_cast<long>(std::floor(m / bin_minutes)), 0,
                                      static_cast<long>(counts_.size()) - 1);
      counts_[static_cast<std::size_t>(b)] += 1.0;
    }
    day_ = day_minutes;
  }

  double sample(Rng& rng) const {
    std::discrete_distribution<std::size_t> pick(counts_.begin(), counts_.end());
    const auto b = pick(rng);
    std::uniform_real_distribution<double> within(0.0, bin_);
    return std::min(static_cast<double>(b) * bin_ + within(rng), day_ - 1e-9);
  }

  [[nodiscard]] const std::vector<double>& counts() const { return counts_; }

 private:
  double bin_;
  double day_ = 1440.0;
  std::vector<double> counts_;
};

// ---------------------------------------------------------------------------
// Files

namespace detail {
inline double parse_clock_minutes(const std::string& text) {
  if (text.find('-') != std::string::npos) {
    // full timestamp: keep the time of day
    const auto pos = text.find_first_of("T ");
    if (pos == std::string::npos) throw std::invalid_argument("bad interval_start '" + text + "'");
    return parse_clock_minutes(text.substr(pos + 1));
  }
  const auto colon = text.find(':');
  if (colon == std::string::npos) return csv::to_double(text, "interval_start");
  const double h = csv::to_double(text.substr(0, colon), "interval_start");
  const auto rest = text.substr(colon + 1);
  const auto colon2 = rest.find(':');
  const double m = csv::to_double(rest.substr(0, std::min(rest.size(), colon2 == std::string::npos ? rest.size() : colon2)),
                                  "interval_start");
  return h * 60.0 + m;
}
}  // namespace detail

/// Reads `interval_start,price_per_kwh` (start as HH:MM, minutes, or a
/// timestamp) and expands it onto the day grid; each price holds until the
/// next start.
inline std::vector<double> read_prices(const std::filesystem::path& path, int intervals = 288,
                                       double interval_minutes = 5.0) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read price file " + path.string());
  std::string line;
  std::getline(in, line);
  const auto header = csv::split(line);
  if (header.size() < 2 || header[0] != "interval_start" || header[1] != "price_per_kwh")
    throw std::runtime_error(path.string() + ": expected header 'interval_start,price_per_kwh'");
  std::vector<std::pair<double, double>> entries;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto f = csv::split(line);
    const auto where = path.string() + " line " + std::to_string(line_no);
    if (f.size() < 2) throw std::runtime_error(where + ": wrong field count");
    const double price = csv::to_double(f[1], where);
    if (price < 0.0) throw std::runtime_error(where + ": negative price");
    entries.emplace_back(detail::parse_clock_minutes(f[0]), price);
  }
  if (entries.empty()) throw std::runtime_error(path.string() + ": no prices");
  std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  if (entries.front().first > 0.0) throw std::runtime_error(path.string() + ": prices do not start at 00:00");
  std::vector<double> out(static_cast<std::size_t>(intervals));
  std::size_t e = 0;
  for (int i = 0; i < intervals; ++i) {
    const double t = i * interval_minutes;
    while (e + 1 < entries.size() && entries[e + 1].first <= t + 1e-9) ++e;
    out[static_cast<std::size_t>(i)] = entries[e].second;
  }
  return out;
}

inline void write_plan(const BiddingPlan& plan, const std::filesystem::path& path, const std::string& provenance = {}) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  if (!provenance.empty()) out << "# " << provenance << '\n';
  out << "ev,interval,p_kw\n";
  for (Eigen::Index n = 0; n < plan.power.rows(); ++n)
    for (Eigen::Index i = 0; i < plan.power.cols(); ++i) out << n << ',' << i << ',' << csv::format(plan.power(n, i)) << '\n';
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

inline std::string cost_summary(const BiddingCosts& c) {
  return "energy_procurement = " + csv::format(c.energy) + "\nuser_penalty = " + csv::format(c.penalty) +
         "\ntotal = " + csv::format(c.total) + "\n";
}

}  // namespace diffcharge
