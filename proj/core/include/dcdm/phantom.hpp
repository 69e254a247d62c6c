// Copyright 2026 The DCDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <utility>
#include <vector>

#include "dcdm/image.hpp"
#include "dcdm/tensor.hpp"

namespace dcdm {

/// Ground-truth activity distribution with lesion/liver annotations.
/// Masks are stored as {0,1} grids (the container convention for masks).
struct ActivityMap {
  Tensor<float> grid;         // (h, w), values in [0, 1]
  Tensor<float> lesion_mask;  // (h, w), {0, 1}
  Tensor<float> liver_mask;   // (h, w), {0, 1}

  std::size_t height() const { return grid.dim(0); }
  std::size_t width() const { return grid.dim(1); }
};

struct DoseConfig {
  double counts_full = 2e5;                          // expected total counts at full dose
  std::vector<int> drf_levels = {100, 50, 20, 10, 4};  // strictly decreasing
  double blur_fwhm = 1.2;                            // pixels

  void validate() const;
};

/// Deterministic-by-seed synthetic phantom: soft body background, one liver
/// region, one lesion hot spot, plus `n_structures` extra smooth ellipses.
ActivityMap generate_phantom(std::uint64_t seed, std::size_t h, std::size_t w,
                             std::size_t n_structures);

/// Expected count grid at dose level `drf` (counts_full scaled by the map,
/// divided by drf). Pure function; the Poisson stage draws against this.
Tensor<double> dose_expectation(const ActivityMap& map, const DoseConfig& cfg, int drf);

struct DoseCounts {
  Tensor<double> full;  // Poisson draw at full dose
  Tensor<double> low;   // independent Poisson draw at counts/drf, pre-blur
};

/// Raw count stage of the dose simulator, exposed for statistical checks.
DoseCounts simulate_dose_counts(const ActivityMap& map, const DoseConfig& cfg, int drf,
                                std::uint64_t seed);

/// Full-dose / low-dose pair: Poisson realizations, blur on the low-dose
/// image, then joint normalization by the full-dose maximum.
std::pair<ImageBatch, ImageBatch> simulate_dose(const ActivityMap& map, const DoseConfig& cfg,
                                                int drf, std::uint64_t seed);

/// Separable Gaussian blur (FWHM in pixels) with edge renormalization.
void blur_gaussian(Tensor<double>& img, double fwhm);

}  // namespace dcdm
