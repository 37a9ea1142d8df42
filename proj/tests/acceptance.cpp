// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance [--only 1,2,...]
//
// Exit status is zero iff every selected criterion passed.
#include "diffcharge/bidding.hpp"
#include "diffcharge/csv.hpp"
#include "diffcharge/engine.hpp"
#include "diffcharge/ingest.hpp"
#include "diffcharge/metrics.hpp"
#include "diffcharge/schedule.hpp"
#include "support/qp_oracle.hpp"
#include "support/stats.hpp"
#include "support/synthetic.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <iostream>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace diffcharge;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------

Outcome schedule_exactness() {
  const auto s = build_schedule(50, 1e-4, 0.5);
  const double ref = 0.123510113025505443687;
  const double rel = std::abs(s.beta(25) - ref) / ref;
  const bool ends = s.beta(1) == 1e-4 && s.beta(50) == 0.5;
  return {ends && rel < 1e-6, "beta_1/beta_50 exact=" + std::string(ends ? "yes" : "no") + " beta_25 rel.err=" + fmt(rel)};
}

Outcome posterior_identity() {
  const auto s = build_schedule(50, 1e-4, 0.5);
  Rng rng(101);
  std::normal_distribution<double> n01;
  std::uniform_int_distribution<int> step(2, 50);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const std::vector<double> x0{n01(rng)}, eps{n01(rng)};
    const int t = step(rng);
    const auto xt = forward_sample<double>(x0, t, eps, s);
    const double a = posterior_mean_from_x0<double>(x0, xt, t, s)[0];
    const double b = posterior_mean_from_eps<double>(xt, eps, t, s)[0];
    worst = std::max(worst, std::abs(a - b));
  }
  return {worst <= 1e-10, "max |difference| over 1000 triples=" + fmt(worst)};
}

Outcome terminal_gaussianization() {
  const auto s = build_schedule(50, 1e-4, 0.5);
  Rng rng(102);
  std::normal_distribution<double> n01;
  std::uniform_real_distribution<double> data(-1.0, 1.0);
  std::vector<double> x0(10000), eps(10000);
  for (auto& v : x0) v = data(rng);
  for (auto& v : eps) v = n01(rng);
  const auto xs = forward_sample<double>(x0, 50, eps, s);
  const double d = testing::ks_normal_statistic(xs);
  const double p = testing::ks_normal_pvalue(xs);
  return {p > 0.01, "KS D=" + fmt(d) + " p=" + fmt(p)};
}

Outcome gradient_correctness() {
  double worst = 0.0;
  std::size_t checked = 0;
  for (const bool conditional : {false, true}) {
    NetworkConfig cfg;
    cfg.length = 8;
    cfg.hidden = 4;
    cfg.heads = 2;
    cfg.head_width = 4;
    cfg.conditional = conditional;
    cfg.labels = conditional ? 2 : 0;
    DenoiserModel<double> m(cfg);
    Rng rng(103);
    m.initialize(rng);
    const std::optional<int> label = conditional ? std::optional<int>(1) : std::nullopt;
    std::normal_distribution<double> n01;
    std::vector<double> x0(8), eps(8);
    for (auto& v : x0) v = std::tanh(n01(rng));
    for (auto& v : eps) v = n01(rng);
    const auto sched = build_schedule(50, 1e-4, 0.5);
    const int t = 17;
    const auto xt = forward_sample<double>(x0, t, eps, sched);

    auto loss = [&](const DenoiserModel<double>& model) {
      const auto y = predict_noise<double>(xt, t, label, model);
      double sum = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) sum += (y[i] - eps[i]) * (y[i] - eps[i]);
      return sum;
    };
    ForwardCache<double> cache;
    const auto& out = forward(m, std::span<const double>(xt), t, label, cache);
    Vector<double> d(8);
    for (int i = 0; i < 8; ++i) d(i) = 2.0 * (out(i) - eps[static_cast<std::size_t>(i)]);
    DenoiserModel<double> grad(cfg);
    backward(m, cache, label, d, grad);

    std::vector<const Matrix<double>*> analytic;
    grad.for_each_parameter([&](const std::string&, const Matrix<double>& g) { analytic.push_back(&g); });
    std::size_t k = 0;
    m.for_each_parameter([&](const std::string&, Matrix<double>& p) {
      const auto& g = *analytic[k++];
      for (Eigen::Index i = 0; i < p.size(); ++i) {
        // Five-point central stencil: O(h^4) truncation with little round-off.
        const double orig = p.data()[i];
        const double h = 1e-4;
        auto at = [&](double offset) {
          p.data()[i] = orig + offset;
          return loss(m);
        };
        const double fd = (at(-2 * h) - 8 * at(-h) + 8 * at(h) - at(2 * h)) / (12 * h);
        p.data()[i] = orig;
        const double an = g.data()[i];
        worst = std::max(worst, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1e-6}));
        ++checked;
      }
    });
  }
  return {worst < 1e-4, std::to_string(checked) + " parameters, max rel.err=" + fmt(worst)};
}

// ---------------------------------------------------------------------------
// Toy generation run shared by criteria 5, 7 and 8.

constexpr double kToyResolution = 5.0;  // minutes

struct ToyRun {
  testing::ToyCurves toy;
  CurveCorpus real;
  CurveCorpus gen;
  TrainResult train;
  double train_seconds = 0.0;
  double sample_seconds = 0.0;
};

const ToyRun& toy_run() {
  static const ToyRun run = [] {
    ToyRun r;
    const std::uint64_t seed = 1;
    r.toy = testing::toy_charging_curves(500, seed);
    r.real = {r.toy.batch.values, r.toy.valid_len, kToyResolution};

    NormalizationRecord rec;
    ScenarioBatch data;
    data.values = normalize(r.toy.batch.values, &rec);
    NetworkConfig cfg;
    cfg.length = 144;
    DenoiserModel<float> model(cfg);
    Rng init = derive_stream(seed, stage::kInit);
    model.initialize(init);
    const auto sched = build_schedule(50, 1e-4, 0.5);
    TrainConfig tc;
    tc.seed = seed;

    auto t0 = std::chrono::steady_clock::now();
    r.train = train(data, model, sched, tc, [&](int epoch, double loss) {
      if (epoch % 10 == 0)
        std::cerr << "  toy training epoch " << epoch << " loss " << fmt(loss) << " (" << fmt(seconds_since(t0), 3)
                  << " s)\n";
    });
    r.train_seconds = seconds_since(t0);
    t0 = std::chrono::steady_clock::now();
    const auto gen = sample(model, sched, 500, std::nullopt, seed, rec);
    r.sample_seconds = seconds_since(t0);
    r.gen = recover_corpus(gen.values, kToyResolution);
    return r;
  }();
  return run;
}

Outcome toy_generation() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& r = toy_run();
  const double marginal = marginal_score(r.real.values, r.gen.values);
  const auto disc = discriminative_score(r.real.values, r.gen.values, 5, 1);
  const auto density = bulk_rate_density(r.gen);
  auto modes = density.modes();
  modes.resize(std::min<std::size_t>(modes.size(), 3));
  std::sort(modes.begin(), modes.end());
  bool trimodal = modes.size() == 3;
  const double levels[3] = {8.0, 16.0, 32.0};
  for (std::size_t i = 0; trimodal && i < 3; ++i) trimodal = std::abs(modes[i] - levels[i]) <= 1.0;
  std::string mode_text;
  for (double m : modes) mode_text += (mode_text.empty() ? "" : "/") + fmt(m, 3);
  const double elapsed = seconds_since(t0);

  const bool pass = marginal <= 0.10 && disc.score.mean >= 0.55 && trimodal && elapsed <= 1200.0;
  return {pass, "marginal=" + fmt(marginal) + " (<=0.10) discriminative=" + fmt(disc.score.mean) + "+-" +
                    fmt(disc.score.std) + " (>=0.55) modes=" + mode_text + " (8/16/32 +-1) epochs=" +
                    std::to_string(r.train.loss_history.size()) + " best_epoch=" + std::to_string(r.train.best_epoch) +
                    " train=" + fmt(r.train_seconds, 3) + "s sample=" + fmt(r.sample_seconds, 3) + "s"};
}

Outcome duration_diversity() {
  const auto& r = toy_run();
  const auto real = duration_pdf(r.real.valid_len, kToyResolution);
  const auto gen = duration_pdf(r.gen.valid_len, kToyResolution);
  const double tv = total_variation(real, gen);
  return {tv <= 0.15, "duration TV=" + fmt(tv) + " (<=0.15)"};
}

Outcome tail_pipeline() {
  const auto& r = toy_run();
  const auto t0 = std::chrono::steady_clock::now();
  TailOptions opts;
  opts.seed = 1;
  const double self = tail_score(r.real, r.real, opts).score.mean;
  const auto cross = tail_score(r.real, r.gen, opts);
  const auto flagged = std::count(cross.flagged.begin(), cross.flagged.end(), true);
  const double elapsed = seconds_since(t0);
  return {self <= 1e-6 && cross.score.mean <= 0.10 && elapsed < 120.0,
          "tail(X,X)=" + fmt(self) + " (<=1e-6) tail(real,gen)=" + fmt(cross.score.mean) + "+-" +
              fmt(cross.score.std) + " (<=0.10) flagged clusters=" + std::to_string(flagged)};
}

// ---------------------------------------------------------------------------

// Daily station loads on a 15-min grid (96 samples). Class 0 peaks in the
// morning with a broad high load; class 1 peaks in the evening with a
// narrower, lower one.
ScenarioBatch station_days(int per_class, std::uint64_t seed) {
  constexpr int kLen = 96;
  Rng rng(seed);
  std::normal_distribution<double> n01;
  ScenarioBatch b;
  b.values = RowMatrix::Zero(2 * per_class, kLen);
  for (int r = 0; r < 2 * per_class; ++r) {
    const int label = r % 2;
    const double center = (label == 0 ? 9.5 : 19.0) + 0.5 * n01(rng);
    const double width = label == 0 ? 2.0 : 1.2;
    const double peak = (label == 0 ? 60.0 : 25.0) * (1.0 + 0.1 * n01(rng));
    for (int i = 0; i < kLen; ++i) {
      const double hour = (i + 0.5) / 4.0;
      const double z = (hour - center) / width;
      b.values(r, i) = std::max(0.0, 2.0 + peak * std::exp(-0.5 * z * z) + 0.8 * n01(rng));
    }
    b.labels.push_back(label);
  }
  return b;
}

RowMatrix rows_with_label(const ScenarioBatch& b, int label) {
  std::vector<Eigen::Index> idx;
  for (Eigen::Index r = 0; r < b.size(); ++r)
    if (b.labels[static_cast<std::size_t>(r)] == label) idx.push_back(r);
  RowMatrix out(static_cast<Eigen::Index>(idx.size()), b.length());
  for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = b.values.row(idx[k]);
  return out;
}

Outcome conditional_separation() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t seed = 1;
  const auto data = station_days(120, seed);
  NormalizationRecord rec;
  const ScenarioBatch normalized{normalize(data.values, &rec), data.labels};

  NetworkConfig cfg;
  cfg.length = static_cast<int>(data.length());
  cfg.conditional = true;
  cfg.labels = 2;
  DenoiserModel<float> model(cfg);
  Rng init = derive_stream(seed, stage::kInit);
  model.initialize(init);
  const auto sched = build_schedule(50, 1e-4, 0.5);
  TrainConfig tc;
  tc.seed = seed;
  const auto result = train(normalized, model, sched, tc);

  RowMatrix real[2] = {rows_with_label(data, 0), rows_with_label(data, 1)};
  Eigen::RowVectorXd mean[2] = {real[0].colwise().mean(), real[1].colwise().mean()};
  RowMatrix gen[2];
  int correct = 0, total = 0;
  for (int label = 0; label < 2; ++label) {
    gen[label] = sample(model, sched, 100, label, seed + static_cast<std::uint64_t>(label), rec).values;
    for (Eigen::Index r = 0; r < gen[label].rows(); ++r) {
      const double d0 = (gen[label].row(r) - mean[0]).squaredNorm();
      const double d1 = (gen[label].row(r) - mean[1]).squaredNorm();
      correct += (d0 <= d1 ? 0 : 1) == label;
      ++total;
    }
  }
  const double accuracy = static_cast<double>(correct) / total;
  const double same = 0.5 * (marginal_score(real[0], gen[0]) + marginal_score(real[1], gen[1]));
  const double cross = 0.5 * (marginal_score(real[0], gen[1]) + marginal_score(real[1], gen[0]));
  const double elapsed = seconds_since(t0);
  return {accuracy >= 0.95 && cross >= 2.0 * same && elapsed <= 1200.0,
          "accuracy=" + fmt(accuracy) + " (>=0.95) marginal same-label=" + fmt(same) + " cross-label=" + fmt(cross) +
              " ratio=" + fmt(cross / same) + " (>=2) epochs=" + std::to_string(result.loss_history.size()) + " in " +
              fmt(elapsed, 3) + "s"};
}

// ---------------------------------------------------------------------------

Outcome bidding_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(109);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto inst = testing::random_small_instance(rng);
    const double got = solve_bidding(inst).costs.total;
    const double want = evaluate_plan(testing::enumerate_instance(inst), inst).total;
    worst = std::max(worst, std::abs(got - want) / std::max(std::abs(want), 1e-12));
  }

  // Penalty-dominant limit, on instances where clamped demand is within capacity.
  double limit_gap = 0.0;
  int limit_cases = 0;
  while (limit_cases < 50) {
    auto inst = testing::random_small_instance(rng);
    if (!(inst.demand.array() <= inst.capacity[0]).all()) continue;
    const double max_price = *std::max_element(inst.price.begin(), inst.price.end());
    inst.penalty_price = 1e6 * std::max(max_price, 1e-3);
    const RowMatrix clamped = inst.demand.cwiseMax(0.0).cwiseMin(inst.capacity[0]);
    limit_gap = std::max(limit_gap, (solve_bidding(inst).power - clamped).cwiseAbs().maxCoeff() / inst.capacity[0]);
    ++limit_cases;
  }

  bool exact = true;
  for (int i = 0; i < 50; ++i) {
    auto inst = testing::random_small_instance(rng);
    inst.demand = inst.demand.cwiseMin(inst.capacity[0]);
    std::fill(inst.price.begin(), inst.price.end(), 0.0);
    exact = exact && solve_bidding(inst).power == inst.demand;
  }
  const double elapsed = seconds_since(t0);
  return {worst <= 1e-4 && limit_gap <= 1e-3 && exact && elapsed < 60.0,
          "max rel. objective gap=" + fmt(worst) + " (<=1e-4) limit gap/CR=" + fmt(limit_gap) +
              " (<=1e-3) zero-price exact=" + (exact ? "yes" : "no")};
}

Outcome ingestion_conservation() {
  // Fixture sessions: irregular sample spacing, varied rates, two stations,
  // one crossing midnight.
  std::ostringstream fixture;
  fixture << "session_id,station_id,connection_time,done_charging_time,kwh_delivered,rate_points\n";
  Rng rng(110);
  std::uniform_int_distribution<int> gap(20, 400);
  std::uniform_real_distribution<double> rate(0.0, 32.0);
  std::vector<SessionRecord> expected;
  for (int s = 0; s < 12; ++s) {
    EpochSeconds t = 1556668800 + s * 7 * 3600;
    const EpochSeconds start = t;
    std::string points;
    for (int k = 0; k < 60; ++k) {
      points += (k ? ";" : "") + std::to_string(t) + ":" + fmt(rate(rng), 6);
      t += gap(rng);
    }
    fixture << 's' << s << ',' << (s % 2 ? "Caltech" : "JPL") << ',' << start << ',' << t + 60 << ",1," << points << '\n';
  }
  const auto path = std::filesystem::temp_directory_path() / "diffcharge_acceptance_sessions.csv";
  std::ofstream(path) << fixture.str();

  auto ingest_once = [&](double& worst) {
    const auto file = parse_sessions(path);
    const auto curves = build_battery_curves(file.sessions);
    ProfileOptions po;
    po.unit = RateUnit::kKilowatts;
    std::vector<StationProfile> profiles;
    for (const char* st : {"JPL", "Caltech"}) {
      auto p = build_station_profiles(file.sessions, st, static_cast<int>(profiles.size()), po);
      profiles.insert(profiles.end(), p.begin(), p.end());
    }
    double signal = 0.0;
    for (std::size_t i = 0; i < file.sessions.size(); ++i) {
      const double e = signal_integral_hours(file.sessions[i]);
      signal += e;
      const double binned = std::accumulate(curves[i].values.begin(), curves[i].values.end(), 0.0) / 60.0;
      worst = std::max(worst, std::abs(binned / e - 1.0));
    }
    double profile_energy = 0.0;
    for (const auto& p : profiles) profile_energy += std::accumulate(p.values.begin(), p.values.end(), 0.0) * 5.0 / 60.0;
    worst = std::max(worst, std::abs(profile_energy / signal - 1.0));
    std::ostringstream out;
    write_scenarios(curves_to_batch(curves), out);
    write_scenarios(profiles_to_batch(profiles), out);
    return out.str();
  };
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  const bool identical = ingest_once(worst) == ingest_once(worst);
  const double elapsed = seconds_since(t0);
  return {worst <= 0.01 && identical && elapsed < 10.0,
          "max relative energy error=" + fmt(worst) + " (<=0.01) re-ingestion identical=" + (identical ? "yes" : "no")};
}

Outcome metric_self_tests() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(111);
  std::normal_distribution<double> step(0.0, 0.3);
  RowMatrix walks(200, 24);
  for (Eigen::Index r = 0; r < walks.rows(); ++r) {
    double x = 0.0;
    for (Eigen::Index i = 0; i < walks.cols(); ++i) walks(r, i) = x += step(rng);
  }
  const double self_marginal = marginal_score(walks, walks);
  const double disc = discriminative_score(walks.topRows(100), walks.bottomRows(100), 3, 7).score.mean;

  double mass_error = 0.0;
  auto check = [&](const Histogram& h) {
    mass_error = std::max(mass_error, std::abs(std::accumulate(h.mass.begin(), h.mass.end(), 0.0) - 1.0));
  };
  std::vector<double> flat(walks.data(), walks.data() + walks.size());
  check(histogram(flat, 50, walks.minCoeff(), walks.maxCoeff()));
  check(rate_density(flat).histogram);
  const auto toy = testing::toy_charging_curves(100, 111);
  check(duration_pdf(toy.valid_len, kToyResolution));
  check(bulk_rate_density({toy.batch.values, toy.valid_len, kToyResolution}).histogram);
  const double elapsed = seconds_since(t0);
  return {self_marginal == 0.0 && disc >= 0.6 && mass_error <= 1e-9 && elapsed < 120.0,
          "marginal(X,X)=" + fmt(self_marginal) + " discriminative self-test=" + fmt(disc) +
              " (>=0.6) max histogram mass error=" + fmt(mass_error)};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string item;
      while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
    } else {
      std::cerr << "usage: acceptance [--only 1,2,...]\n";
      return 2;
    }
  }

  const std::vector<Criterion> criteria{
      {1, "schedule exactness", schedule_exactness},
      {2, "posterior identity", posterior_identity},
      {3, "terminal gaussianization", terminal_gaussianization},
      {4, "gradient correctness", gradient_correctness},
      {5, "end-to-end toy generation", toy_generation},
      {6, "conditional separation", conditional_separation},
      {7, "duration diversity", duration_diversity},
      {8, "tail pipeline", tail_pipeline},
      {9, "bidding oracle equivalence", bidding_oracle},
      {10, "ingestion conservation", ingestion_conservation},
      {11, "metric self-tests", metric_self_tests},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << c.id << "  " << c.name << ": " << o.detail << " ["
              << fmt(seconds_since(t0), 3) << " s]" << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
