// Generation-quality metrics and curve analyses.
#pragma once

#include "diffcharge/classifier.hpp"
#include "diffcharge/csv.hpp"
#include "diffcharge/engine.hpp"
#include "diffcharge/kmeans.hpp"
#include "diffcharge/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace diffcharge {

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

inline MeanStd mean_std(std::span<const double> v) {
  if (v.empty()) return {};
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return {m, std::sqrt(ss / static_cast<double>(v.size()))};
}

/// Fixed-width histogram; `mass` sums to one.
struct Histogram {
  std::vector<double> edges;  // bins + 1
  std::vector<double> mass;
};

inline Histogram histogram(std::span<const double> values, int bins, double lo, double hi) {
  if (bins < 1 || !(hi > lo)) throw std::invalid_argument("histogram: degenerate range or bin count");
  Histogram h;
  h.edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int b = 0; b <= bins; ++b) h.edges[static_cast<std::size_t>(b)] = lo + (hi - lo) * b / bins;
  h.mass.assign(static_cast<std::size_t>(bins), 0.0);
  if (values.empty()) return h;
  for (double v : values) {
    auto b = static_cast<long>(std::floor((v - lo) / (hi - lo) * bins));
    b = std::clamp<long>(b, 0, bins - 1);
    h.mass[static_cast<std::size_t>(b)] += 1.0;
  }
  for (auto& m : h.mass) m /= static_cast<double>(values.size());
  return h;
}

// ---------------------------------------------------------------------------
// Marginal score

/// Total-variation distance between histograms of all pooled values of both
/// batches on their shared range.
inline double marginal_score(const RowMatrix& real, const RowMatrix& gen, int bins = 50) {
  if (real.size() == 0 || gen.size() == 0) throw std::invalid_argument("marginal_score: empty input");
  const double lo = std::min(real.minCoeff(), gen.minCoeff());
  const double hi = std::max(real.maxCoeff(), gen.maxCoeff());
  if (!(hi > lo)) throw std::invalid_argument("marginal_score: degenerate pooled range");
  const auto p = histogram({real.data(), static_cast<std::size_t>(real.size())}, bins, lo, hi);
  const auto q = histogram({gen.data(), static_cast<std::size_t>(gen.size())}, bins, lo, hi);
  double tv = 0.0;
  for (std::size_t b = 0; b < p.mass.size(); ++b) tv += std::abs(p.mass[b] - q.mass[b]);
  return 0.5 * tv;
}

// ---------------------------------------------------------------------------
// Discriminative score

struct DiscriminativeResult {
  MeanStd score;
  std::vector<double> repeats;
};

/// Held-out binary cross-entropy of a recurrent classifier separating real
/// from generated rows; ln 2 means the two sets are indistinguishable.
///
/// Per repeat the larger set is subsampled to the size of the smaller, each
/// side is split 80/20, the classifier trains on the 80% mix and is scored on
/// the 20% mix. Inputs share one min/max scaling into [-1, 1].
inline DiscriminativeResult discriminative_score(const RowMatrix& real, const RowMatrix& gen, int repeats,
                                                 std::uint64_t seed, const ClassifierOptions& opts = {}) {
  if (real.rows() < 20 || gen.rows() < 20)
    throw std::invalid_argument("discriminative_score: need at least 20 samples per side");
  if (real.cols() != gen.cols()) throw std::invalid_argument("discriminative_score: length mismatch");
  const double lo = std::min(real.minCoeff(), gen.minCoeff());
  const double hi = std::max(real.maxCoeff(), gen.maxCoeff());
  const double scale = hi > lo ? 2.0 / (hi - lo) : 0.0;
  auto scaled = [&](const RowMatrix& m, Eigen::Index r) {
    std::vector<float> out(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.cols(); ++i)
      out[static_cast<std::size_t>(i)] = static_cast<float>((m(r, i) - lo) * scale - 1.0);
    return out;
  };

  DiscriminativeResult result;
  const Eigen::Index per_side = std::min(real.rows(), gen.rows());
  const Eigen::Index test_side = std::max<Eigen::Index>(1, per_side / 5);
  for (int rep = 0; rep < repeats; ++rep) {
    Rng rng = derive_stream(seed, stage::kEvaluate, 1000 + static_cast<std::uint64_t>(rep));
    std::vector<Eigen::Index> ri(static_cast<std::size_t>(real.rows())), gi(static_cast<std::size_t>(gen.rows()));
    std::iota(ri.begin(), ri.end(), Eigen::Index{0});
    std::iota(gi.begin(), gi.end(), Eigen::Index{0});
    std::shuffle(ri.begin(), ri.end(), rng);
    std::shuffle(gi.begin(), gi.end(), rng);

    std::vector<std::vector<float>> train_x, test_x;
    std::vector<int> train_y, test_y;
    for (Eigen::Index k = 0; k < per_side; ++k) {
      const bool test = k < test_side;
      auto& xs = test ? test_x : train_x;
      auto& ys = test ? test_y : train_y;
      xs.push_back(scaled(real, ri[static_cast<std::size_t>(k)]));
      ys.push_back(1);
      xs.push_back(scaled(gen, gi[static_cast<std::size_t>(k)]));
      ys.push_back(0);
    }
    const auto model = train_classifier<float>(train_x, train_y, opts, rng);
    ClassifierCache<float> cache;
    double loss = 0.0;
    for (std::size_t i = 0; i < test_x.size(); ++i) {
      const double logit = classifier_logit(model, std::span<const float>(test_x[i]), cache);
      loss += bce_with_logit(logit, test_y[i]);
    }
    result.repeats.push_back(loss / static_cast<double>(test_x.size()));
  }
  result.score = mean_std(result.repeats);
  return result;
}

// ---------------------------------------------------------------------------
// Curve analyses

namespace detail {
/// Centered moving average with a window of `w` samples, truncated at the edges.
inline std::vector<double> moving_average(std::span<const double> x, int w) {
  const auto n = static_cast<long>(x.size());
  const long half_lo = (w - 1) / 2;
  const long half_hi = w / 2;
  std::vector<double> prefix(x.size() + 1, 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) prefix[i + 1] = prefix[i] + x[i];
  std::vector<double> out(x.size());
  for (long i = 0; i < n; ++i) {
    const long a = std::max(0L, i - half_lo);
    const long b = std::min(n, i + half_hi + 1);
    out[static_cast<std::size_t>(i)] =
        (prefix[static_cast<std::size_t>(b)] - prefix[static_cast<std::size_t>(a)]) / static_cast<double>(b - a);
  }
  return out;
}

inline int window_samples(double minutes, double resolution_minutes) {
  return std::max(1, static_cast<int>(std::lround(minutes / resolution_minutes)));
}
}  // namespace detail

/// Charging-curve samples plus their valid (unpadded) lengths.
struct CurveCorpus {
  RowMatrix values;
  std::vector<int> valid_len;
  double resolution_minutes = 1.0;

  [[nodiscard]] std::span<const double> valid(Eigen::Index r) const {
    return {values.row(r).data(), static_cast<std::size_t>(valid_len[static_cast<std::size_t>(r)])};
  }
};

/// Valid length of a padded curve: the prefix ending at the last sample whose
/// 15-min moving average exceeds `fraction` of `corpus_max`.
inline int recover_valid_len(std::span<const double> curve, double resolution_minutes, double corpus_max,
                             double fraction = 0.02) {
  const auto ma = detail::moving_average(curve, detail::window_samples(15.0, resolution_minutes));
  const double threshold = fraction * corpus_max;
  for (auto i = static_cast<long>(ma.size()) - 1; i >= 0; --i)
    if (ma[static_cast<std::size_t>(i)] > threshold) return static_cast<int>(i + 1);
  return 0;
}

inline CurveCorpus recover_corpus(const RowMatrix& values, double resolution_minutes) {
  CurveCorpus c{values, {}, resolution_minutes};
  const double mx = values.size() ? values.maxCoeff() : 0.0;
  for (Eigen::Index r = 0; r < values.rows(); ++r)
    c.valid_len.push_back(
        recover_valid_len({values.row(r).data(), static_cast<std::size_t>(values.cols())}, resolution_minutes, mx));
  return c;
}

struct CurveSegmentation {
  int bulk_begin = 0;
  int bulk_end = 0;        // absorption starts here
  int absorption_end = 0;  // valid length
  double plateau = 0.0;    // bulk plateau level
  bool bulk_only = false;
};

struct SegmentOptions {
  double theta = 0.9;
  double window_minutes = 5.0;
  double resolution_minutes = 1.0;
};

/// Splits the valid part of a curve into bulk and absorption stages.
///
/// The plateau level is the median of the smoothed samples that reach
/// `theta` times the smoothed maximum. The decline is the suffix where the
/// smoothed curve stays strictly below `theta * plateau`; the absorption stage
/// starts right after the last smoothed sample at or above the plateau level
/// that precedes that suffix.
inline CurveSegmentation segment_curve(std::span<const double> valid, const SegmentOptions& opts = {}) {
  if (valid.size() < 10) throw std::invalid_argument("segment_curve: need at least 10 valid samples");
  const auto ma = detail::moving_average(valid, detail::window_samples(opts.window_minutes, opts.resolution_minutes));
  const int n = static_cast<int>(valid.size());
  const double peak = *std::max_element(ma.begin(), ma.end());

  std::vector<double> high;
  for (double v : ma)
    if (v >= opts.theta * peak) high.push_back(v);
  std::nth_element(high.begin(), high.begin() + static_cast<std::ptrdiff_t>(high.size() / 2), high.end());
  const double plateau = high[high.size() / 2];

  CurveSegmentation seg;
  seg.absorption_end = n;
  seg.plateau = plateau;
  int decline = n;
  while (decline > 0 && ma[static_cast<std::size_t>(decline - 1)] < opts.theta * plateau) --decline;
  if (decline >= n || plateau <= 0.0) {
    seg.bulk_end = n;
    seg.bulk_only = true;
    return seg;
  }
  int start = decline;
  while (start > 0 && ma[static_cast<std::size_t>(start - 1)] < plateau) --start;
  seg.bulk_end = std::max(start, 1);
  return seg;
}

// ---------------------------------------------------------------------------
// Tail score

inline std::vector<double> resample_linear(std::span<const double> x, int points) {
  std::vector<double> out(static_cast<std::size_t>(points));
  if (x.size() == 1) {
    std::fill(out.begin(), out.end(), x[0]);
    return out;
  }
  for (int p = 0; p < points; ++p) {
    const double pos = static_cast<double>(p) * static_cast<double>(x.size() - 1) / (points - 1);
    const auto i = std::min(static_cast<std::size_t>(pos), x.size() - 2);
    const double f = pos - static_cast<double>(i);
    out[static_cast<std::size_t>(p)] = x[i] * (1.0 - f) + x[i + 1] * f;
  }
  return out;
}

struct TailOptions {
  int clusters = 7;
  int feature_points = 64;
  int grid_points = 100;
  SegmentOptions segment;
  std::uint64_t seed = 0;
  double gen_feature_scale = 1.0;  // test hook applied after amplitude normalization
};

/// Amplitude-normalized absorption-stage features, one row per curve that has
/// a decline. Curves shorter than 10 samples or bulk-only are skipped.
inline RowMatrix tail_features(const CurveCorpus& corpus, const TailOptions& opts) {
  std::vector<std::vector<double>> rows;
  SegmentOptions seg_opts = opts.segment;
  seg_opts.resolution_minutes = corpus.resolution_minutes;
  for (Eigen::Index r = 0; r < corpus.values.rows(); ++r) {
    if (corpus.valid_len[static_cast<std::size_t>(r)] < 10) continue;
    const auto valid = corpus.valid(r);
    const auto seg = segment_curve(valid, seg_opts);
    if (seg.bulk_only) continue;
    auto f = resample_linear(valid.subspan(static_cast<std::size_t>(seg.bulk_end)), opts.feature_points);
    for (auto& v : f) v /= seg.plateau;
    rows.push_back(std::move(f));
  }
  RowMatrix out(static_cast<Eigen::Index>(rows.size()), opts.feature_points);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (int i = 0; i < opts.feature_points; ++i)
      out(static_cast<Eigen::Index>(r), i) = rows[r][static_cast<std::size_t>(i)];
  return out;
}

/// Mean absolute difference of two empirical CDFs on an evenly spaced grid
/// spanning both samples.
inline double cdf_distance(std::vector<double> a, std::vector<double> b, int grid_points) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double lo = std::min(a.front(), b.front());
  const double hi = std::max(a.back(), b.back());
  if (!(hi > lo)) return 0.0;
  double total = 0.0;
  for (int g = 0; g < grid_points; ++g) {
    const double x = lo + (hi - lo) * g / (grid_points - 1);
    const double fa = static_cast<double>(std::upper_bound(a.begin(), a.end(), x) - a.begin()) / a.size();
    const double fb = static_cast<double>(std::upper_bound(b.begin(), b.end(), x) - b.begin()) / b.size();
    total += std::abs(fa - fb);
  }
  return total / grid_points;
}

struct TailScoreResult {
  MeanStd score;
  std::vector<double> cluster_distance;
  std::vector<int> real_members;
  std::vector<int> gen_members;
  std::vector<bool> flagged;  // cluster had no generated members
  std::vector<int> medoids;   // real-feature row index per cluster
  RowMatrix real_features;
};

/// Clusters real tail features, assigns generated ones to the nearest centroid,
/// and averages per-cluster CDF distances of the pooled normalized rates.
/// A cluster without generated members scores 1 and is flagged.
inline TailScoreResult tail_score(const CurveCorpus& real, const CurveCorpus& gen, const TailOptions& opts = {}) {
  TailScoreResult res;
  res.real_features = tail_features(real, opts);
  RowMatrix gf = tail_features(gen, opts) * opts.gen_feature_scale;
  const int k = opts.clusters;
  if (res.real_features.rows() < k || gf.rows() < k)
    throw std::invalid_argument("tail_score: fewer than k curves with an absorption stage (real " +
                                std::to_string(res.real_features.rows()) + ", generated " +
                                std::to_string(gf.rows()) + ")");
  const auto km = kmeans(res.real_features, k, opts.seed);
  res.medoids = km.medoids;
  std::vector<std::vector<double>> real_vals(static_cast<std::size_t>(k)), gen_vals(static_cast<std::size_t>(k));
  res.real_members.assign(static_cast<std::size_t>(k), 0);
  res.gen_members.assign(static_cast<std::size_t>(k), 0);
  for (Eigen::Index r = 0; r < res.real_features.rows(); ++r) {
    const auto c = static_cast<std::size_t>(km.assignment[static_cast<std::size_t>(r)]);
    ++res.real_members[c];
    for (Eigen::Index i = 0; i < res.real_features.cols(); ++i) real_vals[c].push_back(res.real_features(r, i));
  }
  for (Eigen::Index r = 0; r < gf.rows(); ++r) {
    const auto c = static_cast<std::size_t>(nearest_centroid(km.centroids, gf.row(r)));
    ++res.gen_members[c];
    for (Eigen::Index i = 0; i < gf.cols(); ++i) gen_vals[c].push_back(gf(r, i));
  }
  for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
    const bool empty = gen_vals[c].empty() || real_vals[c].empty();
    res.flagged.push_back(empty);
    res.cluster_distance.push_back(empty ? 1.0 : cdf_distance(real_vals[c], gen_vals[c], opts.grid_points));
  }
  res.score = mean_std(res.cluster_distance);
  return res;
}

// ---------------------------------------------------------------------------
// Duration, autocorrelation and bulk-rate density

/// Distribution of valid durations in hours over (0, max_hours].
inline Histogram duration_pdf(std::span<const int> valid_len, double resolution_minutes, double bin_minutes = 30.0,
                              double max_hours = 12.0) {
  if (valid_len.empty()) throw std::invalid_argument("duration_pdf: empty corpus");
  const int bins = static_cast<int>(std::lround(max_hours * 60.0 / bin_minutes));
  Histogram h;
  h.edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int b = 0; b <= bins; ++b) h.edges[static_cast<std::size_t>(b)] = b * bin_minutes / 60.0;
  h.mass.assign(static_cast<std::size_t>(bins), 0.0);
  for (int len : valid_len) {
    const double minutes = std::min(len * resolution_minutes, max_hours * 60.0);
    // bin b covers (b*w, (b+1)*w]
    const long b = std::clamp<long>(static_cast<long>(std::ceil(minutes / bin_minutes - 1e-9)) - 1, 0, bins - 1);
    h.mass[static_cast<std::size_t>(b)] += 1.0;
  }
  for (auto& m : h.mass) m /= static_cast<double>(valid_len.size());
  return h;
}

inline double total_variation(const Histogram& a, const Histogram& b) {
  if (a.mass.size() != b.mass.size()) throw std::invalid_argument("total_variation: bin mismatch");
  double tv = 0.0;
  for (std::size_t i = 0; i < a.mass.size(); ++i) tv += std::abs(a.mass[i] - b.mass[i]);
  return 0.5 * tv;
}

/// Sample autocorrelation for lags 0..max_lag (entry 0 is 1).
inline std::vector<double> autocorrelation(std::span<const double> x, int max_lag = 48) {
  if (static_cast<long>(x.size()) <= max_lag)
    throw std::invalid_argument("autocorrelation: series of " + std::to_string(x.size()) +
                                " samples is too short for lag " + std::to_string(max_lag));
  const double m = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
  double denom = 0.0;
  for (double v : x) denom += (v - m) * (v - m);
  if (!(denom > 0.0)) throw std::invalid_argument("autocorrelation: constant series");
  std::vector<double> out(static_cast<std::size_t>(max_lag) + 1);
  for (int k = 0; k <= max_lag; ++k) {
    double num = 0.0;
    for (std::size_t i = 0; i + static_cast<std::size_t>(k) < x.size(); ++i)
      num += (x[i] - m) * (x[i + static_cast<std::size_t>(k)] - m);
    out[static_cast<std::size_t>(k)] = num / denom;
  }
  return out;
}

struct DensityEstimate {
  Histogram histogram;
  std::vector<double> grid;
  std::vector<double> density;
  double bandwidth = 0.0;

  /// Local maxima of the smoothed density, highest first.
  [[nodiscard]] std::vector<double> modes() const {
    std::vector<std::pair<double, double>> peaks;
    for (std::size_t i = 1; i + 1 < density.size(); ++i)
      if (density[i] > density[i - 1] && density[i] >= density[i + 1]) peaks.emplace_back(density[i], grid[i]);
    std::sort(peaks.begin(), peaks.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::vector<double> out;
    for (const auto& p : peaks) out.push_back(p.second);
    return out;
  }
};

/// Histogram plus Gaussian kernel density with Silverman's bandwidth.
inline DensityEstimate rate_density(std::span<const double> values, int bins = 50, int grid_points = 1024) {
  if (values.empty()) throw std::invalid_argument("rate_density: no values");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = static_cast<double>(sorted.size());
  const double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : sorted) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / std::max(1.0, n - 1.0));
  auto quantile = [&](double q) {
    const double pos = q * (n - 1.0);
    const auto i = static_cast<std::size_t>(pos);
    const double f = pos - static_cast<double>(i);
    return i + 1 < sorted.size() ? sorted[i] * (1 - f) + sorted[i + 1] * f : sorted.back();
  };
  const double iqr = quantile(0.75) - quantile(0.25);
  double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  double h = 0.9 * spread * std::pow(n, -0.2);
  if (!(h > 0.0)) h = 1e-3 * std::max(1.0, std::abs(mean));

  DensityEstimate est;
  est.bandwidth = h;
  const double lo = sorted.front();
  const double hi = sorted.back();
  est.histogram = histogram(values, bins, lo, hi > lo ? hi : lo + 1.0);
  const double glo = lo - 5.0 * h;
  const double ghi = hi + 5.0 * h;
  est.grid.resize(static_cast<std::size_t>(grid_points));
  est.density.assign(static_cast<std::size_t>(grid_points), 0.0);
  const double norm = 1.0 / (n * h * std::sqrt(2.0 * std::numbers::pi));
  for (int g = 0; g < grid_points; ++g) {
    const double x = glo + (ghi - glo) * g / (grid_points - 1);
    est.grid[static_cast<std::size_t>(g)] = x;
    // only kernels within 8 bandwidths contribute measurably
    const auto first = std::lower_bound(sorted.begin(), sorted.end(), x - 8.0 * h);
    const auto last = std::upper_bound(sorted.begin(), sorted.end(), x + 8.0 * h);
    double acc = 0.0;
    for (auto it = first; it != last; ++it) {
      const double z = (x - *it) / h;
      acc += std::exp(-0.5 * z * z);
    }
    est.density[static_cast<std::size_t>(g)] = acc * norm;
  }
  return est;
}

inline double trapezoid(std::span<const double> x, std::span<const double> y) {
  double s = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) s += 0.5 * (y[i] + y[i - 1]) * (x[i] - x[i - 1]);
  return s;
}

/// Density of the rates observed during the bulk stage of each curve.
inline DensityEstimate bulk_rate_density(const CurveCorpus& corpus, int bins = 50, SegmentOptions seg = {}) {
  seg.resolution_minutes = corpus.resolution_minutes;
  std::vector<double> pooled;
  for (Eigen::Index r = 0; r < corpus.values.rows(); ++r) {
    if (corpus.valid_len[static_cast<std::size_t>(r)] < 10) continue;
    const auto valid = corpus.valid(r);
    const auto s = segment_curve(valid, seg);
    pooled.insert(pooled.end(), valid.begin(), valid.begin() + s.bulk_end);
  }
  return rate_density(pooled, bins);
}

// ---------------------------------------------------------------------------
// Projection export

/// Labeled matrix for an external 2-D embedding tool: `source,t0001,...`.
inline void export_projection_input(const RowMatrix& real, const RowMatrix& gen, const std::filesystem::path& path) {
  if (real.rows() == 0 || gen.rows() == 0) throw std::invalid_argument("export_projection_input: empty input");
  if (real.cols() != gen.cols()) throw std::invalid_argument("export_projection_input: length mismatch");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "source";
  for (Eigen::Index i = 0; i < real.cols(); ++i) out << ',' << csv::step_column(i);
  out << '\n';
  auto emit = [&](const RowMatrix& m, const char* tag) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      out << tag;
      for (Eigen::Index i = 0; i < m.cols(); ++i) out << ',' << csv::format(m(r, i));
      out << '\n';
    }
  };
  emit(real, "real");
  emit(gen, "gen");
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

struct ProjectionInput {
  RowMatrix values;
  std::vector<std::string> source;
};

inline ProjectionInput read_projection_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  const auto header = csv::split(line);
  std::vector<std::vector<double>> rows;
  ProjectionInput p;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = csv::split(line);
    if (f.size() != header.size()) throw std::runtime_error(path.string() + ": wrong field count");
    p.source.push_back(f[0]);
    std::vector<double> row;
    for (std::size_t i = 1; i < f.size(); ++i) row.push_back(csv::to_double(f[i], path.string()));
    rows.push_back(std::move(row));
  }
  p.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(header.size() - 1));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t i = 0; i < rows[r].size(); ++i)
      p.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(i)) = rows[r][i];
  return p;
}

}  // namespace diffcharge
