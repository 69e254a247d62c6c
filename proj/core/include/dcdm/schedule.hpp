// Copyright 2026 The DCDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <vector>

#include "dcdm/errors.hpp"
#include "dcdm/tensor.hpp"

namespace dcdm {

/// Variance schedule tables over T timesteps.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> beta;       // beta_t in (0,1)
  std::vector<double> alpha;      // 1 - beta_t
  std::vector<double> alpha_bar;  // cumulative product of alpha

  double alpha_bar_prev(int t) const { return t > 0 ? alpha_bar[static_cast<std::size_t>(t - 1)] : 1.0; }

  void check_t(int t) const {
    if (t < 0 || t >= T)
      throw DomainError("timestep " + std::to_string(t) + " outside [0, " + std::to_string(T) +
                        ")");
  }
};

/// Linear beta schedule from beta_start to beta_end over T steps.
NoiseSchedule make_schedule(int T, double beta_start, double beta_end);

/// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps
template <class S>
Tensor<S> forward_noise(const Tensor<S>& x0, int t, const Tensor<S>& eps,
                        const NoiseSchedule& s) {
  s.check_t(t);
  if (!x0.same_shape(eps)) throw DomainError("forward_noise: eps shape must match x0");
  const double ab = s.alpha_bar[static_cast<std::size_t>(t)];
  const S c0 = static_cast<S>(std::sqrt(ab));
  const S c1 = static_cast<S>(std::sqrt(1.0 - ab));
  Tensor<S> out(x0.shape());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = c0 * x0[i] + c1 * eps[i];
  return out;
}

/// One reverse step:
///   x_{t-1} = (x_t - beta_t/sqrt(1-alpha_bar_t) eps_hat)/sqrt(alpha_t)
///           + sqrt((1-alpha_bar_{t-1})/(1-alpha_bar_t) beta_t) z
/// The caller supplies z = 0 for t <= 1.
template <class S>
Tensor<S> posterior_step(const Tensor<S>& xt, const Tensor<S>& eps_hat, int t,
                         const Tensor<S>& z, const NoiseSchedule& s) {
  s.check_t(t);
  if (!xt.same_shape(eps_hat) || !xt.same_shape(z))
    throw DomainError("posterior_step: shape mismatch");
  const std::size_t ti = static_cast<std::size_t>(t);
  const double ab = s.alpha_bar[ti];
  const double ab_prev = s.alpha_bar_prev(t);
  const S inv_sqrt_alpha = static_cast<S>(1.0 / std::sqrt(s.alpha[ti]));
  const S eps_coef = static_cast<S>(s.beta[ti] / std::sqrt(1.0 - ab));
  const S sigma = static_cast<S>(std::sqrt((1.0 - ab_prev) / (1.0 - ab) * s.beta[ti]));
  Tensor<S> out(xt.shape());
  for (std::size_t i = 0; i < xt.size(); ++i)
    out[i] = inv_sqrt_alpha * (xt[i] - eps_coef * eps_hat[i]) + sigma * z[i];
  return out;
}

}  // namespace dcdm
