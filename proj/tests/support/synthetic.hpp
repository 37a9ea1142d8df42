// Synthetic corpora with known structure for the statistical tests.
#pragma once

#include "diffcharge/engine.hpp"
#include "diffcharge/random.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <vector>

namespace diffcharge::testing {

struct ToyCurves {
  ScenarioBatch batch;
  std::vector<int> valid_len;  // in samples
  std::vector<int> family;
  std::vector<double> plateau;
};

/// Plateau-then-decline charging curves on a 5-min grid (12 h = 144 samples).
/// Family 0 declines linearly to zero, family 1 decays exponentially. Plateau
/// levels are drawn from {8, 16, 32} with small bulk fluctuations.
inline ToyCurves toy_charging_curves(int count, std::uint64_t seed, int length = 144) {
  Rng rng(seed);
  constexpr std::array<double, 3> kLevels{8.0, 16.0, 32.0};
  std::uniform_int_distribution<int> level_pick(0, 2);
  std::uniform_int_distribution<int> family_pick(0, 1);
  std::uniform_int_distribution<int> duration(length / 8, length);  // 1.5 h .. 12 h at 5 min
  std::normal_distribution<double> jitter(0.0, 0.25);

  ToyCurves out;
  out.batch.values = RowMatrix::Zero(count, length);
  for (int n = 0; n < count; ++n) {
    const double level = kLevels[static_cast<std::size_t>(level_pick(rng))];
    const int fam = family_pick(rng);
    const int valid = duration(rng);
    std::uniform_real_distribution<double> tail_frac(0.15, 0.4);
    const int tail = std::max(3, static_cast<int>(std::round(tail_frac(rng) * valid)));
    const int bulk = valid - tail;
    for (int i = 0; i < valid; ++i) {
      double v;
      if (i < bulk) {
        v = level + jitter(rng) * level / 16.0;
      } else {
        const double u = static_cast<double>(i - bulk + 1) / static_cast<double>(tail);
        v = fam == 0 ? level * (1.0 - 0.9 * u) : level * std::exp(-2.5 * u);
      }
      out.batch.values(n, i) = std::max(0.0, v);
    }
    out.valid_len.push_back(valid);
    out.family.push_back(fam);
    out.plateau.push_back(level);
  }
  return out;
}

}  // namespace diffcharge::testing
