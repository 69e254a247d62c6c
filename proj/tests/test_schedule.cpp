// Copyright 2026 The DCDM Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cmath>

#include "dcdm/errors.hpp"
#include "dcdm/rng.hpp"
#include "dcdm/schedule.hpp"

using namespace dcdm;

TEST_CASE("single step schedule") {
  const NoiseSchedule s = make_schedule(1, 0.5, 0.5);
  CHECK(s.beta[0] == 0.5);
  CHECK(s.alpha_bar[0] == 0.5);
}

TEST_CASE("no-noise limit pushes alpha_bar to one") {
  const NoiseSchedule s = make_schedule(50, 1e-12, 1e-12);
  for (double ab : s.alpha_bar) CHECK(ab == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("standard 1000-step schedule matches a direct product") {
  const NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
  // Independent evaluation in extended precision.
  long double prod = 1.0L;
  for (int t = 0; t < 1000; ++t) {
    const long double beta = 1e-4L + (0.02L - 1e-4L) * t / 999.0L;
    prod *= (1.0L - beta);
    CHECK(s.alpha_bar[static_cast<std::size_t>(t)] ==
          doctest::Approx(static_cast<double>(prod)).epsilon(1e-12));
    if (t > 0)
      CHECK(s.alpha_bar[static_cast<std::size_t>(t)] <
            s.alpha_bar[static_cast<std::size_t>(t - 1)]);
  }
  CHECK(s.alpha_bar.back() < 0.01);
}

TEST_CASE("schedule bounds are enforced") {
  CHECK_THROWS_AS(make_schedule(0, 1e-4, 0.02), ConfigError);
  CHECK_THROWS_AS(make_schedule(10, 0.0, 0.02), ConfigError);
  CHECK_THROWS_AS(make_schedule(10, 0.03, 0.02), ConfigError);
  CHECK_THROWS_AS(make_schedule(10, 1e-4, 1.0), ConfigError);
}

TEST_CASE("forward_noise identity and pure-noise limits") {
  Rng rng(5);
  Tensor<double> x0({2, 3});
  Tensor<double> eps({2, 3});
  rng.fill_gaussian(x0);
  rng.fill_gaussian(eps);

  const NoiseSchedule tiny = make_schedule(4, 1e-14, 1e-14);
  const Tensor<double> close = forward_noise(x0, 3, eps, tiny);
  for (std::size_t i = 0; i < x0.size(); ++i)
    CHECK(close[i] == doctest::Approx(x0[i]).epsilon(1e-6));

  const NoiseSchedule heavy = make_schedule(2000, 0.02, 0.05);
  const Tensor<double> noisy = forward_noise(x0, 1999, eps, heavy);
  for (std::size_t i = 0; i < x0.size(); ++i)
    CHECK(noisy[i] == doctest::Approx(eps[i]).epsilon(1e-6));

  CHECK_THROWS_AS(forward_noise(x0, 4, eps, tiny), DomainError);
  CHECK_THROWS_AS(forward_noise(x0, -1, eps, tiny), DomainError);
}

TEST_CASE("forward_noise Monte Carlo moments at three timesteps") {
  const NoiseSchedule s = make_schedule(200, 1e-4, 0.02);
  Rng rng(17);
  const double x0 = 0.7;
  const int n = 10000;
  for (int t : {1, 100, 199}) {
    const double ab = s.alpha_bar[static_cast<std::size_t>(t)];
    Tensor<double> x({1});
    x[0] = x0;
    double sum = 0, sumsq = 0;
    Tensor<double> eps({1});
    for (int i = 0; i < n; ++i) {
      eps[0] = rng.gaussian();
      const double v = forward_noise(x, t, eps, s)[0];
      sum += v;
      sumsq += v * v;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    const double want_mean = std::sqrt(ab) * x0;
    const double want_var = 1.0 - ab;
    const double sigma_mean = std::sqrt(want_var / n);
    const double sigma_var = want_var * std::sqrt(2.0 / n);
    CHECK(std::abs(mean - want_mean) < 4.0 * sigma_mean);
    CHECK(std::abs(var - want_var) < 4.0 * sigma_var);
  }
}

namespace {
// Independent scalar transcription of the reverse-step formula.
double posterior_scalar(double xt, double eps_hat, double beta, double alpha, double ab,
                        double ab_prev, double z) {
  const double mean = (xt - beta / std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(alpha);
  const double sigma = std::sqrt((1.0 - ab_prev) / (1.0 - ab) * beta);
  return mean + sigma * z;
}
}  // namespace

TEST_CASE("posterior_step agrees with an independent scalar oracle") {
  const NoiseSchedule s = make_schedule(50, 1e-3, 0.04);
  Rng rng(23);
  for (int trial = 0; trial < 200; ++trial) {
    const int t = static_cast<int>(rng.uniform_int(50));
    Tensor<double> xt({1}), eps({1}), z({1});
    xt[0] = rng.gaussian();
    eps[0] = rng.gaussian();
    z[0] = t > 1 ? rng.gaussian() : 0.0;
    const double got = posterior_step(xt, eps, t, z, s)[0];
    const std::size_t ti = static_cast<std::size_t>(t);
    const double want = posterior_scalar(xt[0], eps[0], s.beta[ti], s.alpha[ti], s.alpha_bar[ti],
                                         s.alpha_bar_prev(t), z[0]);
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("posterior_step variance vanishes at t=0 and is no-op in the beta->0 limit") {
  const NoiseSchedule s = make_schedule(10, 1e-3, 0.04);
  Tensor<double> xt({4}), eps({4}), z({4});
  Rng rng(2);
  rng.fill_gaussian(xt);
  rng.fill_gaussian(eps);
  z.set_zero();
  const Tensor<double> a = posterior_step(xt, eps, 0, z, s);
  const Tensor<double> b = posterior_step(xt, eps, 0, z, s);
  CHECK(a == b);  // deterministic with z = 0

  const NoiseSchedule tiny = make_schedule(5, 1e-15, 1e-15);
  Tensor<double> zero_eps({4});
  const Tensor<double> kept = posterior_step(xt, zero_eps, 3, z, tiny);
  for (std::size_t i = 0; i < xt.size(); ++i)
    CHECK(kept[i] == doctest::Approx(xt[i]).epsilon(1e-9));
}
