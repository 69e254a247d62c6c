// Copyright 2026 The DCDM Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "dcdm/enc.hpp"
#include "fd_check.hpp"

using namespace dcdm;
using dcdm::testing::fd_check;

namespace {
const UNetConfig kTiny{.in_channels = 1, .stem_channels = 4, .max_channels = 8};
}

TEST_CASE("fresh modulation ignores the token path entirely") {
  Enc<double> enc(kTiny, 8, Rng(1));
  Rng rng(2);
  Mat<double> za(8, 2), zb(8, 2);
  za.setRandom();
  zb.setRandom();
  const std::vector<int> t = {3, 9};
  const Mat<double> fa = enc.modulation_feature(za, t, nullptr);
  const Mat<double> fb = enc.modulation_feature(zb, t, nullptr);
  CHECK((fa - fb).norm() == 0.0);  // zero linear kills the Z path at init

  // And it still depends on t.
  const Mat<double> fc = enc.modulation_feature(za, {4, 9}, nullptr);
  CHECK((fa.col(0) - fc.col(0)).norm() > 0.0);
  CHECK((fa.col(1) - fc.col(1)).norm() == 0.0);
}

TEST_CASE("fresh ENC emits exactly zero control maps with the right ladder") {
  Enc<double> enc(kTiny, 8, Rng(3));
  Rng rng(4);
  Tensor<double> x({2, 1, 64, 64});
  rng.fill_gaussian(x);
  Mat<double> zpool(8, 2);
  zpool.setRandom();
  const ControlSignal<double> ctrl = enc.forward(x, zpool, {5, 6}, nullptr);
  const auto ch = kTiny.block_channels();
  for (int i = 0; i < 6; ++i) {
    const auto& m = ctrl.maps[static_cast<std::size_t>(i)];
    CHECK(m.dim(0) == 2);
    CHECK(m.dim(1) == static_cast<std::size_t>(ch[static_cast<std::size_t>(i)]));
    CHECK(m.dim(2) == 64u >> (i + 1));
    CHECK(m.dim(3) == 64u >> (i + 1));
    CHECK(m.max() == 0.0);
    CHECK(m.min() == 0.0);
  }
}

TEST_CASE("EN block with zero modulation equals the copied encoder path") {
  const UNetConfig cfg = kTiny;
  Denoiser<double> denoiser(cfg, Rng(5));
  Enc<double> enc = init_enc_from_encoder(denoiser, 8, 7);
  Rng rng(6);
  Tensor<double> h({1, 4, 16, 16});
  rng.fill_gaussian(h);
  // Zero modulation bias: block output must equal the plain conv stack copied
  // from the denoiser encoder (which adds its own t-embedding, so compare
  // against the denoiser block evaluated with a zero bias too).
  Mat<double> zero_bias = Mat<double>::Zero(4, 1);
  const Tensor<double> enc_out = enc.blocks()[0].forward(h, zero_bias, nullptr);
  const Tensor<double> den_out =
      denoiser.encoder_blocks()[0].forward(h, zero_bias, nullptr);
  CHECK(enc_out == den_out);
}

TEST_CASE("init_enc_from_encoder copies bitwise and stays independent") {
  Denoiser<double> denoiser(kTiny, Rng(8));
  Enc<double> enc = init_enc_from_encoder(denoiser, 8, 9);

  const auto& src = denoiser.encoder_blocks()[2].cb1.conv.weight.value;
  const auto& dst = enc.blocks()[2].cb1.conv.weight.value;
  CHECK(src == dst);

  // Zero layers are exactly zero.
  for (int i = 0; i < 6; ++i) {
    CHECK(enc.zero_conv(i).weight.value.max() == 0.0);
    CHECK(enc.zero_conv(i).weight.value.min() == 0.0);
    CHECK(enc.zero_conv(i).bias.value.max() == 0.0);
  }
  CHECK(enc.zero_linear().weight.value.max() == 0.0);
  CHECK(enc.zero_linear().bias.value.max() == 0.0);

  // Mutating the copy never touches the source.
  const std::uint64_t before = params_hash(denoiser.params());
  enc.blocks()[2].cb1.conv.weight.value[0] += 1.0;
  CHECK(params_hash(denoiser.params()) == before);
}

TEST_CASE("ENC gradients match finite differences") {
  Enc<double> enc(kTiny, 8, Rng(10));
  Rng rng(11);
  Tensor<double> x({1, 1, 64, 64});
  rng.fill_gaussian(x);
  Mat<double> zpool(8, 1);
  zpool.setRandom();
  const std::vector<int> t = {2};

  // Nudge the zero layers off zero so every path carries gradient.
  Rng nudger(12);
  nudger.fill_uniform(enc.zero_linear().weight.value, -0.05, 0.05);
  for (int i = 0; i < 6; ++i) nudger.fill_uniform(enc.zero_conv(i).weight.value, -0.05, 0.05);

  auto probe = [](const ControlSignal<double>& ctrl) {
    double s = 0;
    std::size_t k = 0;
    for (const auto& m : ctrl.maps)
      for (std::size_t i = 0; i < m.size(); ++i)
        s += std::sin(0.31 * static_cast<double>(k++)) * m[i];
    return s;
  };

  ParamRefs<double> ps = enc.params();
  zero_grads(ps);
  typename Enc<double>::Ctx ctx;
  ControlSignal<double> ctrl = enc.forward(x, zpool, t, &ctx);
  ControlSignal<double> dmaps;
  std::size_t k = 0;
  for (int i = 0; i < 6; ++i) {
    dmaps.maps[static_cast<std::size_t>(i)] =
        Tensor<double>(ctrl.maps[static_cast<std::size_t>(i)].shape());
    for (std::size_t j = 0; j < dmaps.maps[static_cast<std::size_t>(i)].size(); ++j)
      dmaps.maps[static_cast<std::size_t>(i)][j] = std::sin(0.31 * static_cast<double>(k++));
  }
  const Mat<double> dz = enc.backward(dmaps, ctx);

  auto loss_fn = [&] { return probe(enc.forward(x, zpool, t, nullptr)); };
  const auto rep = fd_check(ps, loss_fn, 1e-5, 16);
  INFO("worst: ", rep.worst_param, "[", rep.worst_index, "]");
  CHECK(rep.max_rel_err < 1e-4);

  // Token-path input gradient via finite differences.
  double max_rel = 0;
  for (Eigen::Index i = 0; i < zpool.rows(); ++i) {
    const double orig = zpool(i, 0);
    zpool(i, 0) = orig + 1e-5;
    const double lp = loss_fn();
    zpool(i, 0) = orig - 1e-5;
    const double lm = loss_fn();
    zpool(i, 0) = orig;
    const double fd = (lp - lm) / 2e-5;
    max_rel = std::max(max_rel, std::abs(fd - dz(i, 0)) /
                                    std::max({std::abs(fd), std::abs(dz(i, 0)), 1e-6}));
  }
  CHECK(max_rel < 1e-4);
}

TEST_CASE("token-path gradient appears after one update to the zero linear") {
  Enc<double> enc(kTiny, 8, Rng(13));
  Rng rng(14);
  Tensor<double> x({1, 1, 64, 64});
  rng.fill_gaussian(x);
  Mat<double> zpool(8, 1);
  zpool.setRandom();

  auto zgrad_norm = [&] {
    zero_grads(enc.params());
    typename Enc<double>::Ctx ctx;
    ControlSignal<double> ctrl = enc.forward(x, zpool, {1}, &ctx);
    ControlSignal<double> dmaps;
    for (int i = 0; i < 6; ++i) {
      dmaps.maps[static_cast<std::size_t>(i)] =
          Tensor<double>::full(ctrl.maps[static_cast<std::size_t>(i)].shape(), 1.0);
    }
    return enc.backward(dmaps, ctx).norm();
  };

  CHECK(zgrad_norm() == 0.0);  // blocked by the zero linear at init
  // Nudge the zero linear and one ZeroConv; now gradient reaches the tokens.
  enc.zero_linear().weight.value[0] = 0.3;
  for (int i = 0; i < 6; ++i) enc.zero_conv(i).weight.value[0] = 0.2;
  CHECK(zgrad_norm() > 0.0);
}

TEST_CASE("a short training run turns at least one control map on") {
  const UNetConfig cfg = kTiny;
  Denoiser<double> denoiser(cfg, Rng(15));
  Enc<double> enc = init_enc_from_encoder(denoiser, 8, 16);
  Rng rng(17);
  Tensor<double> x({2, 1, 64, 64});
  rng.fill_gaussian(x);
  Mat<double> zpool(8, 2);
  zpool.setRandom();

  const std::uint64_t frozen_before = params_hash(denoiser.params());
  Adam<double> opt(1e-2);
  for (int step = 0; step < 100; ++step) {
    zero_grads(enc.params());
    typename Enc<double>::Ctx ctx;
    ControlSignal<double> ctrl = enc.forward(x, zpool, {3, 4}, &ctx);
    // Pull every map toward one: loss = sum (map - 1)^2.
    ControlSignal<double> dmaps;
    for (int i = 0; i < 6; ++i) {
      const auto& m = ctrl.maps[static_cast<std::size_t>(i)];
      Tensor<double> g(m.shape());
      for (std::size_t j = 0; j < m.size(); ++j) g[j] = 2.0 * (m[j] - 1.0);
      dmaps.maps[static_cast<std::size_t>(i)] = std::move(g);
    }
    enc.backward(dmaps, ctx);
    opt.step(enc.params());
  }
  double norm = 0;
  const ControlSignal<double> after = enc.forward(x, zpool, {3, 4}, nullptr);
  for (const auto& m : after.maps)
    for (std::size_t j = 0; j < m.size(); ++j) norm += m[j] * m[j];
  CHECK(norm > 0.0);

  // Training ENC must leave the source encoder untouched.
  CHECK(params_hash(denoiser.params()) == frozen_before);
}
