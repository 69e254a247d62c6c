// Copyright 2026 The DCDM Authors
// SPDX-License-Identifier: Apache-2.0

#include "dcdm/schedule.hpp"

namespace dcdm {

NoiseSchedule make_schedule(int T, double beta_start, double beta_end) {
  if (T < 1) throw ConfigError("make_schedule: T must be >= 1");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
    throw ConfigError("make_schedule: need 0 < beta_start <= beta_end < 1");
  NoiseSchedule s;
  s.T = T;
  s.beta.resize(static_cast<std::size_t>(T));
  s.alpha.resize(static_cast<std::size_t>(T));
  s.alpha_bar.resize(static_cast<std::size_t>(T));
  double prod = 1.0;
  for (int t = 0; t < T; ++t) {
    const double frac = T > 1 ? static_cast<double>(t) / static_cast<double>(T - 1) : 0.0;
    const double b = beta_start + (beta_end - beta_start) * frac;
    const std::size_t i = static_cast<std::size_t>(t);
    s.beta[i] = b;
    s.alpha[i] = 1.0 - b;
    prod *= s.alpha[i];
    s.alpha_bar[i] = prod;
  }
  return s;
}

}  // namespace dcdm
