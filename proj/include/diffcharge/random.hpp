// Seeded random streams. Every stochastic stage draws from its own stream
// derived from the run's root seed.
#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace diffcharge {

using Rng = std::mt19937_64;

/// Stream for (root seed, stage tag, index); distinct tuples give independent-looking streams.
inline Rng derive_stream(std::uint64_t seed, std::uint64_t stage, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stage), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

namespace stage {
inline constexpr std::uint64_t kInit = 1;
inline constexpr std::uint64_t kTrain = 2;
inline constexpr std::uint64_t kSample = 3;
inline constexpr std::uint64_t kEvaluate = 4;
inline constexpr std::uint64_t kBid = 5;
}  // namespace stage

template <typename T, typename Container>
void fill_normal(Container& out, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  for (auto& v : out) v = static_cast<T>(dist(rng));
}

template <typename T>
std::vector<T> standard_normal(std::size_t n, Rng& rng) {
  std::vector<T> out(n);
  fill_normal<T>(out, rng);
  return out;
}

}  // namespace diffcharge
