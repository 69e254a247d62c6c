// Copyright 2026 The DCDM Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "dcdm/nn/layers.hpp"
#include "fd_check.hpp"

using namespace dcdm;
using dcdm::testing::fd_check;

namespace {

// Scalar probe loss: weighted sum of outputs, fixed weights.
template <class F>
double weighted_sum(const Tensor<double>& t, F weight) {
  double s = 0;
  for (std::size_t i = 0; i < t.size(); ++i) s += weight(i) * t[i];
  return s;
}

double probe_weight(std::size_t i) { return std::sin(0.37 * static_cast<double>(i) + 0.2); }

double probe_loss(const Tensor<double>& t) {
  return weighted_sum(t, [](std::size_t i) { return probe_weight(i); });
}

Tensor<double> probe_grad(const Tensor<double>& t) {
  Tensor<double> g(t.shape());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = probe_weight(i);
  return g;
}

double probe_loss_mat(const Mat<double>& m) {
  double s = 0;
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      s += probe_weight(static_cast<std::size_t>(i * m.cols() + j)) * m(i, j);
  return s;
}

Mat<double> probe_grad_mat(const Mat<double>& m) {
  Mat<double> g(m.rows(), m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      g(i, j) = probe_weight(static_cast<std::size_t>(i * m.cols() + j));
  return g;
}

}  // namespace

TEST_CASE("conv2d gradients (stride 1 and stride 2)") {
  for (int stride : {1, 2}) {
    Rng rng(40 + stride);
    Conv2d<double> conv;
    conv.init("conv", 3, 4, 3, stride, 1, rng);
    Tensor<double> x({2, 3, 8, 8});
    rng.fill_gaussian(x);

    auto run = [&] {
      return probe_loss(conv.forward(x, nullptr));
    };
    zero_grads(conv.params());
    typename Conv2d<double>::Ctx ctx;
    Tensor<double> y = conv.forward(x, &ctx);
    Tensor<double> dx = conv.backward(probe_grad(y), ctx);
    const auto rep = fd_check(conv.params(), run, 1e-6);
    CHECK(rep.max_rel_err < 1e-5);

    // Input gradient against finite differences too.
    double max_rel = 0;
    for (std::size_t i = 0; i < x.size(); i += 13) {
      const double orig = x[i];
      x[i] = orig + 1e-6;
      const double lp = run();
      x[i] = orig - 1e-6;
      const double lm = run();
      x[i] = orig;
      const double fd = (lp - lm) / 2e-6;
      max_rel = std::max(max_rel,
                         std::abs(fd - dx[i]) / std::max({std::abs(fd), std::abs(dx[i]), 1e-8}));
    }
    CHECK(max_rel < 1e-5);
  }
}

TEST_CASE("1x1 conv (zero-init) starts as exact zero and has correct grads") {
  Rng rng(7);
  Conv2d<double> zc;
  zc.init("zc", 3, 3, 1, 1, 0, rng, /*zero_init=*/true);
  Tensor<double> x({1, 3, 4, 4});
  rng.fill_gaussian(x);
  const Tensor<double> y = zc.forward(x, nullptr);
  CHECK(y.max() == 0.0);
  CHECK(y.min() == 0.0);

  typename Conv2d<double>::Ctx ctx;
  zero_grads(zc.params());
  Tensor<double> out = zc.forward(x, &ctx);
  zc.backward(probe_grad(out), ctx);
  const auto rep = fd_check(zc.params(), [&] { return probe_loss(zc.forward(x, nullptr)); }, 1e-6);
  CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("group norm gradients") {
  Rng rng(11);
  GroupNorm<double> gn;
  gn.init("gn", 8);
  // Nudge gamma/beta off their init so the test is not at a special point.
  rng.fill_uniform(gn.gamma.value, 0.5, 1.5);
  rng.fill_uniform(gn.beta.value, -0.5, 0.5);
  Tensor<double> x({2, 8, 4, 4});
  rng.fill_gaussian(x);

  auto run = [&] { return probe_loss(gn.forward(x, nullptr)); };
  zero_grads(gn.params());
  typename GroupNorm<double>::Ctx ctx;
  Tensor<double> y = gn.forward(x, &ctx);
  Tensor<double> dx = gn.backward(probe_grad(y), ctx);
  const auto rep = fd_check(gn.params(), run, 1e-6);
  CHECK(rep.max_rel_err < 1e-5);

  double max_rel = 0;
  for (std::size_t i = 0; i < x.size(); i += 7) {
    const double orig = x[i];
    x[i] = orig + 1e-6;
    const double lp = run();
    x[i] = orig - 1e-6;
    const double lm = run();
    x[i] = orig;
    const double fd = (lp - lm) / 2e-6;
    max_rel = std::max(max_rel,
                       std::abs(fd - dx[i]) / std::max({std::abs(fd), std::abs(dx[i]), 1e-8}));
  }
  CHECK(max_rel < 1e-5);
}

TEST_CASE("linear and FFN gradients; FFN hidden is out/4") {
  Rng rng(13);
  FFN<double> ffn;
  ffn.init("ffn", 8, 8, rng);
  CHECK(ffn.hidden == 2);
  CHECK(ffn.lin1.out_dim == 2);  // compressed to d/4
  CHECK(ffn.lin2.out_dim == 8);

  Mat<double> x(8, 3);
  for (Eigen::Index j = 0; j < 3; ++j)
    for (Eigen::Index i = 0; i < 8; ++i) x(i, j) = rng.gaussian();

  auto run = [&] { return probe_loss_mat(ffn.forward(x, nullptr)); };
  zero_grads(ffn.params());
  typename FFN<double>::Ctx ctx;
  Mat<double> y = ffn.forward(x, &ctx);
  Mat<double> dx = ffn.backward(probe_grad_mat(y), ctx);
  const auto rep = fd_check(ffn.params(), run, 1e-6);
  CHECK(rep.max_rel_err < 1e-5);

  double max_rel = 0;
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double orig = x(i, j);
      x(i, j) = orig + 1e-6;
      const double lp = run();
      x(i, j) = orig - 1e-6;
      const double lm = run();
      x(i, j) = orig;
      const double fd = (lp - lm) / 2e-6;
      max_rel = std::max(max_rel, std::abs(fd - dx(i, j)) /
                                      std::max({std::abs(fd), std::abs(dx(i, j)), 1e-8}));
    }
  CHECK(max_rel < 1e-5);

  CHECK_THROWS_AS([&] {
    FFN<double> bad;
    Rng r2(1);
    bad.init("bad", 8, 6, r2);
  }(), ConfigError);
}

TEST_CASE("FFN zero-weight reduction leaves only the output bias") {
  Rng rng(3);
  FFN<double> ffn;
  ffn.init("ffn", 4, 4, rng);
  ffn.lin1.weight.value.set_zero();
  ffn.lin2.weight.value.set_zero();
  // With W2 = 0 the output is exactly b2 regardless of the input.
  Mat<double> x(4, 2);
  x.setRandom();
  Mat<double> y = ffn.forward(x, nullptr);
  for (Eigen::Index j = 0; j < y.cols(); ++j)
    for (Eigen::Index i = 0; i < y.rows(); ++i)
      CHECK(y(i, j) == ffn.lin2.bias.value[static_cast<std::size_t>(i)]);
}

TEST_CASE("upsample/downsample and conv pair block") {
  Rng rng(29);
  Tensor<double> x({1, 2, 3, 3});
  rng.fill_gaussian(x);
  const Tensor<double> up = UpsampleNearest2<double>::forward(x);
  CHECK(up.dim(2) == 6);
  CHECK(up.at4(0, 1, 4, 4) == x.at4(0, 1, 2, 2));
  // Adjoint identity: <up(x), y> == <x, up^T(y)>
  Tensor<double> y(up.shape());
  rng.fill_gaussian(y);
  const Tensor<double> down = UpsampleNearest2<double>::backward(y);
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < up.size(); ++i) lhs += up[i] * y[i];
  for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * down[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));

  ConvPairBlock<double> blk;
  blk.init("blk", 4, 4, rng);
  Tensor<double> xin({2, 4, 6, 6});
  rng.fill_gaussian(xin);
  Mat<double> bias(4, 2);
  bias.setRandom();

  auto run = [&] { return probe_loss(blk.forward(xin, bias, nullptr)); };
  zero_grads(blk.params());
  typename ConvPairBlock<double>::Ctx ctx;
  Tensor<double> out = blk.forward(xin, bias, &ctx);
  CHECK(out.dim(2) == 6);  // spatial dims preserved inside the block
  Mat<double> dbias = Mat<double>::Zero(4, 2);
  blk.backward(probe_grad(out), ctx, &dbias);
  const auto rep = fd_check(blk.params(), run, 1e-6);
  CHECK(rep.max_rel_err < 1e-5);

  // Bias gradient via finite differences.
  double max_rel = 0;
  for (Eigen::Index j = 0; j < 2; ++j)
    for (Eigen::Index i = 0; i < 4; ++i) {
      const double orig = bias(i, j);
      bias(i, j) = orig + 1e-6;
      const double lp = run();
      bias(i, j) = orig - 1e-6;
      const double lm = run();
      bias(i, j) = orig;
      const double fd = (lp - lm) / 2e-6;
      max_rel = std::max(max_rel, std::abs(fd - dbias(i, j)) /
                                      std::max({std::abs(fd), std::abs(dbias(i, j)), 1e-8}));
    }
  CHECK(max_rel < 1e-5);
}

TEST_CASE("broadcast channel bias equals an explicitly tiled addition") {
  Rng rng(31);
  Tensor<double> x({2, 3, 5, 5});
  rng.fill_gaussian(x);
  Mat<double> bias(3, 2);
  bias.setRandom();

  Tensor<double> a = x;
  ConvPairBlock<double>::add_channel_bias(a, bias);

  // Tiled route: materialize the full bias tensor, then add.
  Tensor<double> tiled(x.shape());
  for (std::size_t b = 0; b < 2; ++b)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < 25; ++i)
        tiled[(b * 3 + c) * 25 + i] = bias(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(b));
  Tensor<double> bt = x;
  bt += tiled;
  CHECK(max_abs_diff(a, bt) < 1e-12);
}

TEST_CASE("sinusoidal embedding is deterministic and bounded") {
  const Vec<double> e1 = sinusoidal_embed<double>(17, 16);
  const Vec<double> e2 = sinusoidal_embed<double>(17, 16);
  CHECK((e1 - e2).norm() == 0.0);
  CHECK(e1.cwiseAbs().maxCoeff() <= 1.0);
  const Vec<double> e3 = sinusoidal_embed<double>(18, 16);
  CHECK((e1 - e3).norm() > 0.0);
}

TEST_CASE("concat/split channels are inverse") {
  Rng rng(37);
  Tensor<double> a({2, 3, 4, 4}), b({2, 5, 4, 4});
  rng.fill_gaussian(a);
  rng.fill_gaussian(b);
  const Tensor<double> cat = concat_channels(a, b);
  CHECK(cat.dim(1) == 8);
  Tensor<double> ga, gb;
  split_channels(cat, 3, ga, gb);
  CHECK(ga == a);
  CHECK(gb == b);
}
