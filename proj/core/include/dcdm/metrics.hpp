// Copyright 2026 The DCDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "dcdm/tensor.hpp"

namespace dcdm {

/// 10 log10(max_val^2 / MSE); identical inputs return +infinity.
double psnr(const Tensor<double>& a, const Tensor<double>& b, double max_val = 1.0);

/// Mean local SSIM over sliding 7x7 windows (valid positions only), with the
/// standard stabilization constants at dynamic range 1.0 and sample
/// (N-1 normalized) variances.
double ssim(const Tensor<double>& a, const Tensor<double>& b);

struct SuvReport {
  double delta_suv_max = 0;
  double delta_suv_mean = 0;
  double snr = 0;  // SUV_mean_lesion / SD_liver
  double cov = 0;  // SD_liver / SUV_mean_liver
  double cr = 0;   // SUV_max_lesion / SUV_mean_liver
};

/// Lesion/liver uptake statistics; masks are {0,1} grids of the image shape.
/// SD is the population standard deviation over liver pixels.
SuvReport suv_metrics(const Tensor<double>& recon, const Tensor<double>& ref,
                      const Tensor<float>& lesion_mask, const Tensor<float>& liver_mask);

inline double psnr(const Tensor<float>& a, const Tensor<float>& b, double max_val = 1.0) {
  return psnr(a.cast<double>(), b.cast<double>(), max_val);
}
inline double ssim(const Tensor<float>& a, const Tensor<float>& b) {
  return ssim(a.cast<double>(), b.cast<double>());
}
inline SuvReport suv_metrics(const Tensor<float>& recon, const Tensor<float>& ref,
                             const Tensor<float>& lesion_mask, const Tensor<float>& liver_mask) {
  return suv_metrics(recon.cast<double>(), ref.cast<double>(), lesion_mask, liver_mask);
}

}  // namespace dcdm
