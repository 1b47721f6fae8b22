#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace layerguard {

// std::*_distribution output differs between standard libraries, so seeded
// artifacts (generated corpora, calibration results) draw through these
// helpers over the raw mt19937_64 stream instead.
using Rng = std::mt19937_64;

inline double unit_uniform(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(unit_uniform(rng) * static_cast<double>(n)) % n;
}

inline double uniform_real(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * unit_uniform(rng);
}

inline double standard_normal(Rng& rng) {
  double u1 = unit_uniform(rng);
  while (u1 <= 0.0) u1 = unit_uniform(rng);
  const double u2 = unit_uniform(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

inline double normal(Rng& rng, double mean, double stddev) { return mean + stddev * standard_normal(rng); }

// Knuth's multiplication method; fine for the small means used by the generators.
inline std::int64_t poisson(Rng& rng, double mean) {
  if (mean > 30.0) return std::max<std::int64_t>(0, std::llround(normal(rng, mean, std::sqrt(mean))));
  const double limit = std::exp(-mean);
  std::int64_t k = 0;
  double p = unit_uniform(rng);
  while (p > limit) {
    ++k;
    p *= unit_uniform(rng);
  }
  return k;
}

template <typename T>
void shuffle_in_place(std::vector<T>& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    std::size_t j = uniform_index(rng, i);
    using std::swap;
    swap(items[i - 1], items[j]);
  }
}

}  // namespace layerguard
