// Copyright 2026 The DCDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "dcdm/tensor.hpp"

namespace dcdm {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Deterministic random source. Distribution sampling is implemented here
/// (not via std:: distributions) so that streams are reproducible for a given
/// seed independent of the standard library in use.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : eng_(splitmix64(seed)), seed_base_(seed) {}

  /// Independent substream; `stream` tags the purpose (step index, role, ...).
  Rng derive(std::uint64_t stream) const {
    return Rng(seed_base_ ^ splitmix64(stream + 0x51ED2701ull));
  }

  std::uint64_t next_u64() { return eng_(); }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t uniform_int(std::uint64_t n) {
    // Rejection to avoid modulo bias.
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v >= limit);
    return v % n;
  }

  /// Standard normal via Box-Muller (pairs cached).
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  /// Exact Poisson sampling. Knuth's product method, chunked so the
  /// exp(-lambda) bound never underflows for large rates.
  std::uint64_t poisson(double lambda) {
    if (lambda <= 0.0) return 0;
    std::uint64_t total = 0;
    constexpr double kChunk = 60.0;
    while (lambda > kChunk) {
      total += poisson_knuth(kChunk);
      lambda -= kChunk;
    }
    return total + poisson_knuth(lambda);
  }

  template <class S>
  void fill_gaussian(Tensor<S>& t) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<S>(gaussian());
  }

  template <class S>
  void fill_uniform(Tensor<S>& t, double lo, double hi) {
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<S>(uniform(lo, hi));
  }

private:
  std::uint64_t poisson_knuth(double lambda) {
    const double l = std::exp(-lambda);
    std::uint64_t k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= uniform();
    } while (p > l);
    return k - 1;
  }

  std::mt19937_64 eng_;
  std::uint64_t seed_base_ = 0;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace dcdm
