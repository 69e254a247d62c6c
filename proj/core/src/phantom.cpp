// Copyright 2026 The DCDM Authors
// SPDX-License-Identifier: Apache-2.0

#include "dcdm/phantom.hpp"

#include <algorithm>
#include <cmath>

#include "dcdm/errors.hpp"
#include "dcdm/rng.hpp"

namespace dcdm {
namespace {

struct Ellipse {
  double cy, cx;   // center, pixel units
  double ry, rx;   // radii
  double angle;    // radians
  double amp;      // peak contribution
};

// Normalized elliptical radius^2 of pixel (y, x) w.r.t. the ellipse.
double elliptic_r2(const Ellipse& e, double y, double x) {
  const double dy = y - e.cy;
  const double dx = x - e.cx;
  const double ca = std::cos(e.angle), sa = std::sin(e.angle);
  const double u = (ca * dx + sa * dy) / e.rx;
  const double v = (-sa * dx + ca * dy) / e.ry;
  return u * u + v * v;
}

// Smooth compact bump: amp * (1 - r^2)^2 inside the ellipse.
void paint(Tensor<float>& grid, const Ellipse& e) {
  const std::size_t h = grid.dim(0), w = grid.dim(1);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const double r2 = elliptic_r2(e, double(y), double(x));
      if (r2 < 1.0) {
        const double b = 1.0 - r2;
        grid[y * w + x] += static_cast<float>(e.amp * b * b);
      }
    }
}

// Mask = core of the bump, where the contribution is clearly elevated.
void paint_mask(Tensor<float>& mask, const Ellipse& e, double core = 0.8) {
  const std::size_t h = mask.dim(0), w = mask.dim(1);
  const double r2max = core * core;
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      if (elliptic_r2(e, double(y), double(x)) <= r2max) mask[y * w + x] = 1.0f;
}

}  // namespace

void DoseConfig::validate() const {
  if (counts_full <= 0) throw ConfigError("DoseConfig: counts_full must be positive");
  if (blur_fwhm < 0) throw ConfigError("DoseConfig: blur_fwhm must be non-negative");
  for (std::size_t i = 1; i < drf_levels.size(); ++i)
    if (drf_levels[i] >= drf_levels[i - 1])
      throw ConfigError("DoseConfig: drf_levels must be strictly decreasing");
  for (int v : drf_levels)
    if (v <= 0) throw ConfigError("DoseConfig: drf_levels must be positive");
}

ActivityMap generate_phantom(std::uint64_t seed, std::size_t h, std::size_t w,
                             std::size_t n_structures) {
  if (h < 32 || w < 32)
    throw ConfigError("generate_phantom: grid must be at least 32x32, got " + std::to_string(h) +
                      "x" + std::to_string(w));
  if (n_structures < 1) throw ConfigError("generate_phantom: n_structures must be >= 1");

  Rng rng(seed);
  ActivityMap map;
  map.grid = Tensor<float>({h, w});
  map.lesion_mask = Tensor<float>({h, w});
  map.liver_mask = Tensor<float>({h, w});

  const double hh = static_cast<double>(h), ww = static_cast<double>(w);

  // Soft body outline filling most of the field of view.
  Ellipse body;
  body.cy = hh * rng.uniform(0.46, 0.54);
  body.cx = ww * rng.uniform(0.46, 0.54);
  body.ry = hh * rng.uniform(0.38, 0.44);
  body.rx = ww * rng.uniform(0.38, 0.44);
  body.angle = rng.uniform(-0.2, 0.2);
  body.amp = rng.uniform(0.12, 0.2);
  paint(map.grid, body);

  // Liver-like region kept in the left part of the body; lesion on the right
  // with a margin, so the two masks are disjoint by construction.
  Ellipse liver;
  liver.cy = hh * rng.uniform(0.35, 0.55);
  liver.cx = ww * rng.uniform(0.24, 0.34);
  liver.ry = hh * rng.uniform(0.14, 0.2);
  liver.rx = ww * rng.uniform(0.12, 0.18);
  liver.angle = rng.uniform(-0.4, 0.4);
  liver.amp = rng.uniform(0.3, 0.4);
  paint(map.grid, liver);
  paint_mask(map.liver_mask, liver);

  Ellipse lesion;
  lesion.cy = hh * rng.uniform(0.3, 0.7);
  lesion.cx = ww * rng.uniform(0.68, 0.82);
  lesion.ry = hh * rng.uniform(0.04, 0.08);
  lesion.rx = ww * rng.uniform(0.04, 0.08);
  lesion.angle = rng.uniform(-0.8, 0.8);
  lesion.amp = rng.uniform(0.45, 0.6);
  paint(map.grid, lesion);
  paint_mask(map.lesion_mask, lesion);

  for (std::size_t i = 0; i < n_structures; ++i) {
    Ellipse e;
    e.cy = hh * rng.uniform(0.15, 0.85);
    e.cx = ww * rng.uniform(0.15, 0.85);
    e.ry = hh * rng.uniform(0.05, 0.16);
    e.rx = ww * rng.uniform(0.05, 0.16);
    e.angle = rng.uniform(-M_PI / 2, M_PI / 2);
    e.amp = rng.uniform(0.08, 0.3);
    paint(map.grid, e);
  }

  for (std::size_t i = 0; i < map.grid.size(); ++i)
    map.grid[i] = std::clamp(map.grid[i], 0.0f, 1.0f);
  return map;
}

Tensor<double> dose_expectation(const ActivityMap& map, const DoseConfig& cfg, int drf) {
  cfg.validate();
  if (drf <= 0) throw DomainError("dose_expectation: drf must be positive");
  const std::size_t n = map.grid.size();
  Tensor<double> e({map.height(), map.width()});
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = static_cast<double>(map.grid[i]);
    if (!std::isfinite(v)) throw DomainError("dose_expectation: map has non-finite values");
    total += v;
  }
  if (total <= 0) return e;  // all-zero activity stays all-zero
  const double scale = cfg.counts_full / total / static_cast<double>(drf);
  for (std::size_t i = 0; i < n; ++i) e[i] = static_cast<double>(map.grid[i]) * scale;
  return e;
}

DoseCounts simulate_dose_counts(const ActivityMap& map, const DoseConfig& cfg, int drf,
                                std::uint64_t seed) {
  if (drf <= 0) throw DomainError("simulate_dose: drf must be positive");
  const bool known = drf == 1 || std::find(cfg.drf_levels.begin(), cfg.drf_levels.end(), drf) !=
                                     cfg.drf_levels.end();
  if (!known)
    throw DomainError("simulate_dose: drf " + std::to_string(drf) +
                      " not in configured drf_levels");
  const Tensor<double> e_full = dose_expectation(map, cfg, 1);
  const Tensor<double> e_low = dose_expectation(map, cfg, drf);

  Rng rng_full = Rng(seed).derive(0x46);
  Rng rng_low = Rng(seed).derive(0x4c);
  DoseCounts out;
  out.full = Tensor<double>({map.height(), map.width()});
  out.low = Tensor<double>({map.height(), map.width()});
  for (std::size_t i = 0; i < e_full.size(); ++i) {
    out.full[i] = static_cast<double>(rng_full.poisson(e_full[i]));
    out.low[i] = static_cast<double>(rng_low.poisson(e_low[i]));
  }
  return out;
}

void blur_gaussian(Tensor<double>& img, double fwhm) {
  if (fwhm <= 0) return;
  const double sigma = fwhm / 2.3548200450309493;  // FWHM -> sigma
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  for (int i = -radius; i <= radius; ++i)
    kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * (i * i) / (sigma * sigma));

  const std::size_t h = img.dim(0), w = img.dim(1);
  Tensor<double> tmp({h, w});
  // Horizontal pass; kernel mass renormalized near edges.
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0, mass = 0;
      for (int k = -radius; k <= radius; ++k) {
        const long xx = static_cast<long>(x) + k;
        if (xx < 0 || xx >= static_cast<long>(w)) continue;
        const double kv = kernel[static_cast<std::size_t>(k + radius)];
        acc += kv * img[y * w + static_cast<std::size_t>(xx)];
        mass += kv;
      }
      tmp[y * w + x] = acc / mass;
    }
  // Vertical pass.
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0, mass = 0;
      for (int k = -radius; k <= radius; ++k) {
        const long yy = static_cast<long>(y) + k;
        if (yy < 0 || yy >= static_cast<long>(h)) continue;
        const double kv = kernel[static_cast<std::size_t>(k + radius)];
        acc += kv * tmp[static_cast<std::size_t>(yy) * w + x];
        mass += kv;
      }
      img[y * w + x] = acc / mass;
    }
}

std::pair<ImageBatch, ImageBatch> simulate_dose(const ActivityMap& map, const DoseConfig& cfg,
                                                int drf, std::uint64_t seed) {
  DoseCounts counts = simulate_dose_counts(map, cfg, drf, seed);
  blur_gaussian(counts.low, cfg.blur_fwhm);

  const std::size_t h = map.height(), w = map.width();
  double full_max = 0;
  for (std::size_t i = 0; i < counts.full.size(); ++i) full_max = std::max(full_max, counts.full[i]);

  ImageBatch full, low;
  full.pixels = Tensor<float>({1, h, w, 1});
  low.pixels = Tensor<float>({1, h, w, 1});
  full.role = DoseRole::FullDose;
  full.drf = 1;
  low.role = DoseRole::LowDose;
  low.drf = drf;
  if (full_max > 0) {
    // Joint scaling: the full-dose maximum sets the intensity scale for both
    // images; low-dose counts are multiplied back by drf so expectations line
    // up, leaving the extra Poisson noise as the visible dose effect.
    const double inv = 1.0 / full_max;
    for (std::size_t i = 0; i < h * w; ++i) {
      full.pixels[i] = static_cast<float>(std::clamp(counts.full[i] * inv, 0.0, 1.0));
      low.pixels[i] =
          static_cast<float>(std::clamp(counts.low[i] * static_cast<double>(drf) * inv, 0.0, 1.0));
    }
  }
  return {std::move(full), std::move(low)};
}

}  // namespace dcdm
