// Copyright 2026 The DCDM Authors
// SPDX-License-Identifier: Apache-2.0

#include "dcdm/metrics.hpp"

#include <cmath>
#include <limits>

#include "dcdm/errors.hpp"

namespace dcdm {
namespace {

constexpr int kSsimWindow = 7;
constexpr double kSsimK1 = 0.01;
constexpr double kSsimK2 = 0.03;
constexpr double kSsimRange = 1.0;

/// Box-filter sums over win x win windows, valid positions only.
Tensor<double> box_sum(const Tensor<double>& img, int win) {
  const std::size_t h = img.dim(0), w = img.dim(1);
  const std::size_t oh = h - static_cast<std::size_t>(win) + 1;
  const std::size_t ow = w - static_cast<std::size_t>(win) + 1;
  Tensor<double> rows({h, ow});
  for (std::size_t y = 0; y < h; ++y) {
    double acc = 0;
    for (int x = 0; x < win; ++x) acc += img[y * w + static_cast<std::size_t>(x)];
    rows[y * ow] = acc;
    for (std::size_t x = 1; x < ow; ++x) {
      acc += img[y * w + x + static_cast<std::size_t>(win) - 1] - img[y * w + x - 1];
      rows[y * ow + x] = acc;
    }
  }
  Tensor<double> out({oh, ow});
  for (std::size_t x = 0; x < ow; ++x) {
    double acc = 0;
    for (int y = 0; y < win; ++y) acc += rows[static_cast<std::size_t>(y) * ow + x];
    out[x] = acc;
    for (std::size_t y = 1; y < oh; ++y) {
      acc += rows[(y + static_cast<std::size_t>(win) - 1) * ow + x] - rows[(y - 1) * ow + x];
      out[y * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace

double psnr(const Tensor<double>& a, const Tensor<double>& b, double max_val) {
  if (!a.same_shape(b)) throw DomainError("psnr: shape mismatch");
  if (!(max_val > 0)) throw DomainError("psnr: max_val must be positive");
  double mse = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.size());
  if (mse == 0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(max_val * max_val / mse);
}

double ssim(const Tensor<double>& a, const Tensor<double>& b) {
  if (!a.same_shape(b)) throw DomainError("ssim: shape mismatch");
  if (a.ndim() != 2) throw DomainError("ssim: expects 2D images");
  const std::size_t h = a.dim(0), w = a.dim(1);
  if (h < kSsimWindow || w < kSsimWindow)
    throw DomainError("ssim: image smaller than the " + std::to_string(kSsimWindow) +
                      "x" + std::to_string(kSsimWindow) + " window");

  const double n = static_cast<double>(kSsimWindow) * kSsimWindow;
  const double cov_norm = n / (n - 1.0);
  const double c1 = (kSsimK1 * kSsimRange) * (kSsimK1 * kSsimRange);
  const double c2 = (kSsimK2 * kSsimRange) * (kSsimK2 * kSsimRange);

  Tensor<double> aa({h, w}), bb({h, w}), ab({h, w});
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const Tensor<double> sa = box_sum(a, kSsimWindow);
  const Tensor<double> sb = box_sum(b, kSsimWindow);
  const Tensor<double> saa = box_sum(aa, kSsimWindow);
  const Tensor<double> sbb = box_sum(bb, kSsimWindow);
  const Tensor<double> sab = box_sum(ab, kSsimWindow);

  double acc = 0;
  for (std::size_t i = 0; i < sa.size(); ++i) {
    const double ux = sa[i] / n;
    const double uy = sb[i] / n;
    const double vx = cov_norm * (saa[i] / n - ux * ux);
    const double vy = cov_norm * (sbb[i] / n - uy * uy);
    const double vxy = cov_norm * (sab[i] / n - ux * uy);
    acc += ((2 * ux * uy + c1) * (2 * vxy + c2)) /
           ((ux * ux + uy * uy + c1) * (vx + vy + c2));
  }
  return acc / static_cast<double>(sa.size());
}

namespace {

struct MaskStats {
  double mean = 0, max = 0, sd = 0;
  std::size_t count = 0;
};

MaskStats mask_stats(const Tensor<double>& img, const Tensor<float>& mask) {
  MaskStats st;
  st.max = -std::numeric_limits<double>::infinity();
  double sum = 0;
  for (std::size_t i = 0; i < img.size(); ++i) {
    if (mask[i] == 0.0f) continue;
    ++st.count;
    sum += img[i];
    st.max = std::max(st.max, img[i]);
  }
  if (st.count == 0) return st;
  st.mean = sum / static_cast<double>(st.count);
  double var = 0;
  for (std::size_t i = 0; i < img.size(); ++i) {
    if (mask[i] == 0.0f) continue;
    const double d = img[i] - st.mean;
    var += d * d;
  }
  st.sd = std::sqrt(var / static_cast<double>(st.count));
  return st;
}

}  // namespace

SuvReport suv_metrics(const Tensor<double>& recon, const Tensor<double>& ref,
                      const Tensor<float>& lesion_mask, const Tensor<float>& liver_mask) {
  if (!recon.same_shape(ref)) throw DomainError("suv_metrics: recon/ref shape mismatch");
  if (!recon.same_shape(lesion_mask.cast<double>()) ||
      !recon.same_shape(liver_mask.cast<double>()))
    throw DomainError("suv_metrics: mask shape mismatch");

  const MaskStats lesion_recon = mask_stats(recon, lesion_mask);
  const MaskStats lesion_ref = mask_stats(ref, lesion_mask);
  const MaskStats liver_recon = mask_stats(recon, liver_mask);
  if (lesion_recon.count == 0) throw DomainError("suv_metrics: empty lesion mask");
  if (liver_recon.count == 0) throw DomainError("suv_metrics: empty liver mask");
  if (liver_recon.sd == 0)
    throw DomainError("suv_metrics: undefined metric, liver SD is zero");
  if (liver_recon.mean == 0)
    throw DomainError("suv_metrics: undefined metric, liver mean is zero");

  SuvReport r;
  r.delta_suv_max = std::abs(lesion_ref.max - lesion_recon.max);
  r.delta_suv_mean = std::abs(lesion_ref.mean - lesion_recon.mean);
  r.snr = lesion_recon.mean / liver_recon.sd;
  r.cov = liver_recon.sd / liver_recon.mean;
  r.cr = lesion_recon.max / liver_recon.mean;
  return r;
}

}  // namespace dcdm
