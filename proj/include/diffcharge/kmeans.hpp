// Lloyd's k-means with k-means++ seeding, restarts and medoid extraction.
#pragma once

#include "diffcharge/engine.hpp"
#include "diffcharge/random.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

namespace diffcharge {

struct KMeansResult {
  RowMatrix centroids;          // k x d
  std::vector<int> assignment;  // cluster of each point
  std::vector<int> medoids;     // per cluster, index of the member closest to its centroid
  std::vector<int> counts;      // members per cluster
  double wcss = 0.0;            // within-cluster sum of squares
  std::vector<double> wcss_trace;     // after each Lloyd iteration of the winning restart
  std::vector<double> restart_wcss;   // final WCSS of every restart
  int iterations = 0;
};

struct KMeansOptions {
  int restarts = 10;
  int max_iterations = 300;
};

namespace detail {

inline double within_cluster_ss(const RowMatrix& points, const RowMatrix& centroids, const std::vector<int>& assign) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    total += (points.row(i) - centroids.row(assign[static_cast<std::size_t>(i)])).squaredNorm();
  return total;
}

inline RowMatrix seed_plus_plus(const RowMatrix& points, int k, Rng& rng) {
  const Eigen::Index n = points.rows();
  RowMatrix centroids(k, points.cols());
  std::vector<double> dist(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  std::vector<bool> taken(static_cast<std::size_t>(n), false);
  std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
  Eigen::Index pick = first(rng);
  for (int c = 0; c < k; ++c) {
    centroids.row(c) = points.row(pick);
    taken[static_cast<std::size_t>(pick)] = true;
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      auto& d = dist[static_cast<std::size_t>(i)];
      d = std::min(d, (points.row(i) - centroids.row(c)).squaredNorm());
      if (!taken[static_cast<std::size_t>(i)]) sum += d;
    }
    if (c + 1 == k) break;
    if (sum > 0.0) {
      std::uniform_real_distribution<double> u(0.0, sum);
      double target = u(rng);
      pick = -1;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (taken[static_cast<std::size_t>(i)]) continue;
        pick = i;
        target -= dist[static_cast<std::size_t>(i)];
        if (target <= 0.0) break;
      }
    } else {
      // every remaining point coincides with a centroid; take any untaken one
      std::vector<Eigen::Index> free;
      for (Eigen::Index i = 0; i < n; ++i)
        if (!taken[static_cast<std::size_t>(i)]) free.push_back(i);
      std::uniform_int_distribution<std::size_t> u(0, free.size() - 1);
      pick = free[u(rng)];
    }
  }
  return centroids;
}

inline int nearest(const RowMatrix& centroids, const auto& row) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c) - row).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

}  // namespace detail

/// Index of the nearest centroid for one feature row.
inline int nearest_centroid(const RowMatrix& centroids, const Eigen::Ref<const Eigen::RowVectorXd>& row) {
  return detail::nearest(centroids, row);
}

/// Best of `opts.restarts` Lloyd runs by WCSS. Each run iterates to an
/// assignment fixed point or `opts.max_iterations`. A cluster that empties is
/// re-seeded with the point farthest from its centroid.
inline KMeansResult kmeans(const RowMatrix& points, int k, std::uint64_t seed, KMeansOptions opts = {}) {
  const Eigen::Index n = points.rows();
  if (k < 1) throw std::invalid_argument("kmeans: k must be positive");
  if (n < k) throw std::invalid_argument("kmeans: " + std::to_string(n) + " points cannot form " + std::to_string(k) +
                                         " clusters");
  KMeansResult best;
  best.wcss = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, opts.restarts); ++r) {
    Rng rng = derive_stream(seed, stage::kEvaluate, static_cast<std::uint64_t>(r));
    KMeansResult run;
    run.centroids = detail::seed_plus_plus(points, k, rng);
    run.assignment.assign(static_cast<std::size_t>(n), -1);
    for (int it = 0; it < opts.max_iterations; ++it) {
      bool changed = false;
      for (Eigen::Index i = 0; i < n; ++i) {
        const int c = detail::nearest(run.centroids, points.row(i));
        if (c != run.assignment[static_cast<std::size_t>(i)]) {
          run.assignment[static_cast<std::size_t>(i)] = c;
          changed = true;
        }
      }
      if (!changed && it > 0) break;
      RowMatrix sums = RowMatrix::Zero(k, points.cols());
      std::vector<int> counts(static_cast<std::size_t>(k), 0);
      for (Eigen::Index i = 0; i < n; ++i) {
        const int c = run.assignment[static_cast<std::size_t>(i)];
        sums.row(c) += points.row(i);
        ++counts[static_cast<std::size_t>(c)];
      }
      for (int c = 0; c < k; ++c) {
        if (counts[static_cast<std::size_t>(c)] > 0) {
          run.centroids.row(c) = sums.row(c) / counts[static_cast<std::size_t>(c)];
          continue;
        }
        Eigen::Index far = 0;
        double far_d = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double d =
              (points.row(i) - run.centroids.row(run.assignment[static_cast<std::size_t>(i)])).squaredNorm();
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        run.centroids.row(c) = points.row(far);
        run.assignment[static_cast<std::size_t>(far)] = c;
      }
      run.iterations = it + 1;
      run.wcss_trace.push_back(detail::within_cluster_ss(points, run.centroids, run.assignment));
    }
    run.wcss = detail::within_cluster_ss(points, run.centroids, run.assignment);
    best.restart_wcss.push_back(run.wcss);
    if (run.wcss < best.wcss) {
      auto history = std::move(best.restart_wcss);
      best = std::move(run);
      best.restart_wcss = std::move(history);
    }
  }

  best.counts.assign(static_cast<std::size_t>(k), 0);
  best.medoids.assign(static_cast<std::size_t>(k), -1);
  std::vector<double> medoid_d(static_cast<std::size_t>(k), std::numeric_limits<double>::infinity());
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto c = static_cast<std::size_t>(best.assignment[static_cast<std::size_t>(i)]);
    ++best.counts[c];
    const double d = (points.row(i) - best.centroids.row(static_cast<Eigen::Index>(c))).squaredNorm();
    if (d < medoid_d[c]) {
      medoid_d[c] = d;
      best.medoids[c] = static_cast<int>(i);
    }
  }
  return best;
}

}  // namespace diffcharge
