// Copyright 2026 The DCDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <string>
#include <vector>

#include "dcdm/control.hpp"
#include "dcdm/denoiser.hpp"
#include "dcdm/nn/layers.hpp"
#include "dcdm/nn/param.hpp"

namespace dcdm {

/// Encoding Nexus Constraint: a copy of the frozen encoder's conv stack with
/// a modulation branch fed by (pooled tokens, timestep) and per-scale
/// ZeroConv output taps. All zero-initialized layers make the branch an exact
/// no-op at initialization.
template <class S>
class Enc {
public:
  Enc() = default;

  Enc(const UNetConfig& unet_cfg, int token_dim, Rng rng) : cfg_(unet_cfg), d_(token_dim) {
    cfg_.validate();
    if (token_dim < 4 || token_dim % 4 != 0)
      throw ConfigError("Enc: token dim must be a positive multiple of 4");
    const auto ch = cfg_.block_channels();
    stem_.init("enc.stem", cfg_.in_channels, ch[0], 3, 2, 1, rng);
    for (int i = 0; i < 6; ++i) {
      const std::size_t ii = static_cast<std::size_t>(i);
      const auto si = std::to_string(i + 1);
      blocks_[ii].init("enc.block" + si, ch[ii], ch[ii], rng);
      proj_[ii].init("enc.proj" + si, token_dim, ch[ii], rng);
      zero_conv_[ii].init("enc.zeroconv" + si, ch[ii], ch[ii], 1, 1, 0, rng, /*zero_init=*/true);
    }
    for (int i = 0; i < 5; ++i)
      down_[static_cast<std::size_t>(i)].init("enc.down" + std::to_string(i + 1),
                                              ch[static_cast<std::size_t>(i)],
                                              ch[static_cast<std::size_t>(i + 1)], 3, 2, 1, rng);
    z_ffn_.init("enc.mod.z_ffn", token_dim, token_dim, rng);
    zero_lin_.init("enc.mod.zero_linear", token_dim, token_dim, rng, /*zero_init=*/true);
    t_ffn_.init("enc.mod.t_ffn", token_dim, token_dim, rng);
    fuse_.init("enc.mod.fuse", token_dim, token_dim, rng);
  }

  const UNetConfig& config() const { return cfg_; }
  int token_dim() const { return d_; }

  struct ModCtx {
    typename FFN<S>::Ctx zf, tf;
    typename Linear<S>::Ctx zl, fuse;
  };

  /// F* = Linear(ZeroLinear(FFN(Z_pool)) + FFN(t_embed)); (d x B).
  Mat<S> modulation_feature(const Mat<S>& z_pooled, const std::vector<int>& t,
                            ModCtx* ctx) const {
    if (z_pooled.rows() != d_)
      throw WiringError("Enc: pooled token dim " + std::to_string(z_pooled.rows()) +
                        " does not match modulation dim " + std::to_string(d_));
    Mat<S> zpath = z_ffn_.forward(z_pooled, ctx ? &ctx->zf : nullptr);
    zpath = zero_lin_.forward(zpath, ctx ? &ctx->zl : nullptr);
    Mat<S> emb(d_, static_cast<Eigen::Index>(t.size()));
    for (std::size_t b = 0; b < t.size(); ++b)
      emb.col(static_cast<Eigen::Index>(b)) = sinusoidal_embed<S>(t[b], d_);
    Mat<S> tpath = t_ffn_.forward(emb, ctx ? &ctx->tf : nullptr);
    return fuse_.forward(zpath + tpath, ctx ? &ctx->fuse : nullptr);
  }

  struct Ctx {
    ModCtx mod;
    typename Conv2d<S>::Ctx stem;
    std::array<typename ConvPairBlock<S>::Ctx, 6> blocks;
    std::array<typename Linear<S>::Ctx, 6> proj;
    std::array<typename Conv2d<S>::Ctx, 6> zc;
    std::array<typename Conv2d<S>::Ctx, 5> down;
  };

  /// Control maps for one timestep batch. x is the low-dose image (NCHW).
  ControlSignal<S> forward(const Tensor<S>& x, const Mat<S>& z_pooled, const std::vector<int>& t,
                           Ctx* ctx) const {
    if (x.dim(2) % 64 != 0 || x.dim(3) % 64 != 0)
      throw DomainError("Enc: spatial dims must be divisible by 64");
    Mat<S> fstar = modulation_feature(z_pooled, t, ctx ? &ctx->mod : nullptr);
    ControlSignal<S> out;
    Tensor<S> h = stem_.forward(x, ctx ? &ctx->stem : nullptr);
    for (int i = 0; i < 6; ++i) {
      const std::size_t ii = static_cast<std::size_t>(i);
      Mat<S> bias = proj_[ii].forward(fstar, ctx ? &ctx->proj[ii] : nullptr);
      h = blocks_[ii].forward(h, bias, ctx ? &ctx->blocks[ii] : nullptr);
      out.maps[ii] = zero_conv_[ii].forward(h, ctx ? &ctx->zc[ii] : nullptr);
      if (i < 5) h = down_[ii].forward(h, ctx ? &ctx->down[ii] : nullptr);
    }
    return out;
  }

  /// Accumulates parameter gradients from control-map gradients; returns the
  /// gradient reaching the pooled token input.
  Mat<S> backward(const ControlSignal<S>& dmaps, Ctx& ctx) {
    const std::size_t B = dmaps.maps[0].dim(0);
    Mat<S> dfstar = Mat<S>::Zero(d_, static_cast<Eigen::Index>(B));
    Tensor<S> dcarry;
    for (int i = 5; i >= 0; --i) {
      const std::size_t ii = static_cast<std::size_t>(i);
      Tensor<S> dblock_out = zero_conv_[ii].backward(dmaps.maps[ii], ctx.zc[ii]);
      if (i < 5) dblock_out += down_[ii].backward(dcarry, ctx.down[ii]);
      Mat<S> dbias =
          Mat<S>::Zero(blocks_[ii].out_channels(), static_cast<Eigen::Index>(B));
      dcarry = blocks_[ii].backward(dblock_out, ctx.blocks[ii], &dbias);
      dfstar += proj_[ii].backward(dbias, ctx.proj[ii]);
    }
    stem_.backward(dcarry, ctx.stem);

    Mat<S> dsum = fuse_.backward(dfstar, ctx.mod.fuse);
    t_ffn_.backward(dsum, ctx.mod.tf);
    Mat<S> dzpath = zero_lin_.backward(dsum, ctx.mod.zl);
    return z_ffn_.backward(dzpath, ctx.mod.zf);
  }

  ParamRefs<S> params() {
    ParamRefs<S> ps = stem_.params();
    for (auto& b : blocks_) append(ps, b.params());
    for (auto& d : down_) append(ps, d.params());
    append(ps, z_ffn_.params());
    append(ps, zero_lin_.params());
    append(ps, t_ffn_.params());
    append(ps, fuse_.params());
    for (auto& p : proj_) append(ps, p.params());
    for (auto& zc : zero_conv_) append(ps, zc.params());
    return ps;
  }

  std::array<ConvPairBlock<S>, 6>& blocks() { return blocks_; }
  Conv2d<S>& zero_conv(int i) { return zero_conv_[static_cast<std::size_t>(i)]; }
  Linear<S>& zero_linear() { return zero_lin_; }
  FFN<S>& z_ffn() { return z_ffn_; }

private:
  static void append(ParamRefs<S>& dst, const ParamRefs<S>& src) {
    dst.insert(dst.end(), src.begin(), src.end());
  }

  UNetConfig cfg_;
  int d_ = 0;
  Conv2d<S> stem_;
  std::array<ConvPairBlock<S>, 6> blocks_;
  std::array<Conv2d<S>, 5> down_;
  FFN<S> z_ffn_;
  Linear<S> zero_lin_;
  FFN<S> t_ffn_;
  Linear<S> fuse_;
  std::array<Linear<S>, 6> proj_;
  std::array<Conv2d<S>, 6> zero_conv_;

  template <class T>
  friend Enc<T> init_enc_from_encoder(const Denoiser<T>&, int, std::uint64_t);
};

/// Builds ENC weights by deep-copying the denoiser encoder's conv stack
/// (stem, block conv/norm pairs, inter-block downsamplers). Modulation layers
/// are freshly initialized; the zero linear and all ZeroConvs stay zero.
template <class S>
Enc<S> init_enc_from_encoder(const Denoiser<S>& denoiser, int token_dim, std::uint64_t seed) {
  Enc<S> enc(denoiser.config(), token_dim, Rng(seed));
  auto copy_param = [](Parameter<S>& dst, const Parameter<S>& src) {
    if (dst.value.shape() != src.value.shape())
      throw StateError("init_enc_from_encoder: source parameter '" + src.name +
                       "' has unexpected shape");
    dst.value = src.value;
  };
  auto copy_conv = [&](Conv2d<S>& dst, const Conv2d<S>& src) {
    copy_param(dst.weight, src.weight);
    if (src.has_bias) copy_param(dst.bias, src.bias);
  };
  auto copy_pair = [&](ConvPairBlock<S>& dst, const ConvPairBlock<S>& src) {
    copy_conv(dst.cb1.conv, src.cb1.conv);
    copy_param(dst.cb1.norm.gamma, src.cb1.norm.gamma);
    copy_param(dst.cb1.norm.beta, src.cb1.norm.beta);
    copy_conv(dst.cb2.conv, src.cb2.conv);
    copy_param(dst.cb2.norm.gamma, src.cb2.norm.gamma);
    copy_param(dst.cb2.norm.beta, src.cb2.norm.beta);
  };
  copy_conv(enc.stem_, denoiser.stem());
  for (int i = 0; i < 6; ++i)
    copy_pair(enc.blocks_[static_cast<std::size_t>(i)],
              denoiser.encoder_blocks()[static_cast<std::size_t>(i)]);
  for (int i = 0; i < 5; ++i)
    copy_conv(enc.down_[static_cast<std::size_t>(i)],
              denoiser.downsamplers()[static_cast<std::size_t>(i)]);
  return enc;
}

}  // namespace dcdm
