// Copyright 2026 The DCDM Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "dcdm/errors.hpp"
#include "dcdm/phantom.hpp"

using namespace dcdm;

TEST_CASE("phantom generation is deterministic by seed") {
  const ActivityMap a = generate_phantom(7, 64, 64, 5);
  const ActivityMap b = generate_phantom(7, 64, 64, 5);
  CHECK(a.grid == b.grid);
  CHECK(a.lesion_mask == b.lesion_mask);
  CHECK(a.liver_mask == b.liver_mask);

  const ActivityMap c = generate_phantom(8, 64, 64, 5);
  CHECK_FALSE(a.grid == c.grid);
}

TEST_CASE("phantom postconditions") {
  const ActivityMap m = generate_phantom(7, 64, 64, 5);
  CHECK(m.grid.min() >= 0.0f);
  CHECK(m.grid.max() <= 1.0f);

  double lesion = 0, liver = 0, overlap = 0;
  for (std::size_t i = 0; i < m.grid.size(); ++i) {
    lesion += m.lesion_mask[i];
    liver += m.liver_mask[i];
    overlap += m.lesion_mask[i] * m.liver_mask[i];
  }
  CHECK(lesion > 0);
  CHECK(liver > 0);
  CHECK(overlap == 0);  // lesion and liver masks are disjoint
}

TEST_CASE("phantom dimension preconditions") {
  CHECK_THROWS_AS(generate_phantom(1, 16, 64, 3), ConfigError);
  CHECK_THROWS_AS(generate_phantom(1, 64, 31, 3), ConfigError);
  CHECK_THROWS_AS(generate_phantom(1, 64, 64, 0), ConfigError);
}

TEST_CASE("drf=1 low and full share the expectation grid") {
  const ActivityMap m = generate_phantom(3, 64, 64, 4);
  DoseConfig cfg;
  cfg.counts_full = 1e5;
  const Tensor<double> e1 = dose_expectation(m, cfg, 1);
  const Tensor<double> e_full = dose_expectation(m, cfg, 1);
  CHECK(e1 == e_full);
  double total = 0;
  for (std::size_t i = 0; i < e1.size(); ++i) total += e1[i];
  CHECK(total == doctest::Approx(1e5).epsilon(1e-9));
}

TEST_CASE("expectation scales exactly with drf") {
  const ActivityMap m = generate_phantom(5, 64, 64, 4);
  DoseConfig cfg;
  const Tensor<double> full = dose_expectation(m, cfg, 1);
  for (int drf : cfg.drf_levels) {
    const Tensor<double> low = dose_expectation(m, cfg, drf);
    for (std::size_t i = 0; i < full.size(); ++i)
      CHECK(low[i] == doctest::Approx(full[i] / drf).epsilon(1e-12));
  }
}

TEST_CASE("Monte Carlo: mean total low counts at drf 4 within 3 sigma") {
  // counts_full = 1e6, drf 4 -> expected total 2.5e5 per draw. Over 100 seeds
  // the sample mean has sigma = sqrt(2.5e5)/10 = 50.
  const ActivityMap m = generate_phantom(42, 64, 64, 5);
  DoseConfig cfg;
  cfg.counts_full = 1e6;
  const int n_seeds = 100;
  double mean_total = 0;
  for (int s = 0; s < n_seeds; ++s) {
    const DoseCounts c = simulate_dose_counts(m, cfg, 4, 1000 + static_cast<std::uint64_t>(s));
    double total = 0;
    for (std::size_t i = 0; i < c.low.size(); ++i) total += c.low[i];
    mean_total += total;
  }
  mean_total /= n_seeds;
  const double sigma_mean = std::sqrt(2.5e5) / std::sqrt(static_cast<double>(n_seeds));
  CHECK(std::abs(mean_total - 2.5e5) < 3.0 * sigma_mean);
}

TEST_CASE("per-pixel expectation invariant E[low] = E[full]/drf (Monte Carlo)") {
  const ActivityMap m = generate_phantom(9, 64, 64, 3);
  DoseConfig cfg;
  cfg.counts_full = 4e5;
  const int drf = 10;
  const Tensor<double> e_low = dose_expectation(m, cfg, drf);
  const int n_seeds = 120;
  Tensor<double> acc({m.height(), m.width()});
  for (int s = 0; s < n_seeds; ++s) {
    const DoseCounts c = simulate_dose_counts(m, cfg, drf, 77 + static_cast<std::uint64_t>(s));
    acc += c.low;
  }
  // Check the aggregate over a bright region rather than single pixels.
  double got = 0, want = 0;
  for (std::size_t i = 0; i < acc.size(); ++i) {
    if (e_low[i] < 1.0) continue;
    got += acc[i] / n_seeds;
    want += e_low[i];
  }
  REQUIRE(want > 0);
  const double sigma = std::sqrt(want / n_seeds);
  CHECK(std::abs(got - want) < 3.0 * sigma);
}

TEST_CASE("zero activity map produces all-zero outputs") {
  ActivityMap m;
  m.grid = Tensor<float>({64, 64});
  m.lesion_mask = Tensor<float>({64, 64});
  m.liver_mask = Tensor<float>({64, 64});
  DoseConfig cfg;
  auto [full, low] = simulate_dose(m, cfg, 4, 5);
  CHECK(full.pixels.max() == 0.0f);
  CHECK(low.pixels.max() == 0.0f);
}

TEST_CASE("simulated pair is normalized and tagged") {
  const ActivityMap m = generate_phantom(21, 64, 64, 5);
  DoseConfig cfg;
  cfg.counts_full = 2e5;
  auto [full, low] = simulate_dose(m, cfg, 20, 17);
  full.validate();
  low.validate();
  CHECK(full.pixels.max() == 1.0f);  // normalized by its own max
  CHECK(full.drf == 1);
  CHECK(low.drf == 20);
  CHECK(low.role == DoseRole::LowDose);
  CHECK(low.pixels.min() >= 0.0f);
  CHECK(low.pixels.max() <= 1.0f);
}

TEST_CASE("dose preconditions") {
  const ActivityMap m = generate_phantom(2, 64, 64, 3);
  DoseConfig cfg;
  CHECK_THROWS_AS(simulate_dose(m, cfg, 0, 1), DomainError);
  CHECK_THROWS_AS(simulate_dose(m, cfg, -4, 1), DomainError);
  CHECK_THROWS_AS(simulate_dose(m, cfg, 7, 1), DomainError);  // not a configured level
  DoseConfig bad;
  bad.drf_levels = {10, 20};
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("gaussian blur preserves mass away from edges") {
  Tensor<double> img({65, 65});
  img[32 * 65 + 32] = 100.0;
  blur_gaussian(img, 2.0);
  double total = 0;
  for (std::size_t i = 0; i < img.size(); ++i) total += img[i];
  CHECK(total == doctest::Approx(100.0).epsilon(1e-9));
  CHECK(img[32 * 65 + 32] < 100.0);
}
