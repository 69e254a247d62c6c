// Copyright 2026 The DCDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dcdm/control.hpp"
#include "dcdm/image.hpp"
#include "dcdm/nn/layers.hpp"
#include "dcdm/nn/param.hpp"
#include "dcdm/schedule.hpp"

namespace dcdm {

struct UNetConfig {
  int in_channels = 1;
  int stem_channels = 32;
  int max_channels = 256;

  std::array<int, 6> block_channels() const {
    std::array<int, 6> ch{};
    for (int i = 0; i < 6; ++i) ch[static_cast<std::size_t>(i)] =
        std::min(stem_channels << i, max_channels);
    return ch;
  }

  void validate() const {
    if (in_channels < 1) throw ConfigError("UNetConfig: in_channels must be >= 1");
    if (stem_channels < 4 || stem_channels % 4 != 0)
      throw ConfigError("UNetConfig: stem_channels must be a positive multiple of 4");
    if (max_channels < stem_channels)
      throw ConfigError("UNetConfig: max_channels must be >= stem_channels");
  }
};

/// Frozen-able encoder/decoder denoiser. The encoder halves resolution at the
/// stem and between blocks (six feature scales, h/2 ... h/64); the decoder
/// mirrors it with nearest-neighbor x2 upsampling. Encoder block i's output
/// is concatenated to the input of the decoder block at the same scale, and a
/// ControlSignal map, when given, is added to that skip tensor.
template <class S>
class Denoiser {
public:
  Denoiser() = default;

  Denoiser(const UNetConfig& cfg, Rng rng) : cfg_(cfg) {
    cfg.validate();
    const auto ch = cfg.block_channels();
    stem_.init("denoiser.stem", cfg.in_channels, ch[0], 3, 2, 1, rng);
    for (int i = 0; i < 6; ++i) {
      const auto si = std::to_string(i + 1);
      const std::size_t ii = static_cast<std::size_t>(i);
      enc_blocks_[ii].init("denoiser.enc" + si, ch[ii], ch[ii], rng);
      enc_temb_[ii].init("denoiser.enc" + si + ".temb", ch[ii], ch[ii], rng);
    }
    for (int i = 0; i < 5; ++i) {
      const std::size_t ii = static_cast<std::size_t>(i);
      down_[ii].init("denoiser.down" + std::to_string(i + 1), ch[ii], ch[ii + 1], 3, 2, 1, rng);
    }
    for (int j = 0; j < 6; ++j) {
      const std::size_t jj = static_cast<std::size_t>(j);
      const int out_c = ch[static_cast<std::size_t>(5 - j)];
      const int carry_c = j == 0 ? ch[5] : ch[static_cast<std::size_t>(6 - j)];
      const int skip_c = ch[static_cast<std::size_t>(5 - j)];
      const auto sj = std::to_string(j + 1);
      dec_blocks_[jj].init("denoiser.dec" + sj, carry_c + skip_c, out_c, rng);
      dec_temb_[jj].init("denoiser.dec" + sj + ".temb", out_c, out_c, rng);
    }
    head_.init("denoiser.head", ch[0], cfg.in_channels, 3, 1, 1, rng);
  }

  const UNetConfig& config() const { return cfg_; }

  struct Ctx {
    typename Conv2d<S>::Ctx stem;
    std::array<typename ConvPairBlock<S>::Ctx, 6> enc;
    std::array<typename FFN<S>::Ctx, 6> enc_temb;
    std::array<typename Conv2d<S>::Ctx, 5> down;
    std::array<typename ConvPairBlock<S>::Ctx, 6> dec;
    std::array<typename FFN<S>::Ctx, 6> dec_temb;
    typename Conv2d<S>::Ctx head;
    std::array<std::size_t, 6> skip_channels{};
    std::array<std::size_t, 6> carry_channels{};
    bool had_control = false;
  };

  /// eps_hat = U_D(U_E(x_t, t) [+ control per skip], t)
  Tensor<S> forward(const Tensor<S>& x, const std::vector<int>& t, const ControlSignal<S>* ctrl,
                    Ctx* ctx) const {
    const std::size_t B = x.dim(0);
    if (t.size() != B) throw WiringError("Denoiser: need one timestep per image");
    if (x.dim(2) % 64 != 0 || x.dim(3) % 64 != 0)
      throw DomainError("Denoiser: spatial dims must be divisible by 64");

    Tensor<S> h = stem_.forward(x, ctx ? &ctx->stem : nullptr);
    std::array<Tensor<S>, 6> skips;
    for (int i = 0; i < 6; ++i) {
      const std::size_t ii = static_cast<std::size_t>(i);
      const Mat<S> bias = temb_bias(enc_temb_[ii], t, ctx ? &ctx->enc_temb[ii] : nullptr);
      h = enc_blocks_[ii].forward(h, bias, ctx ? &ctx->enc[ii] : nullptr);
      skips[ii] = h;
      if (ctrl) {
        check_control_map(ctrl->maps[ii], skips[ii], i);
        skips[ii] += ctrl->maps[ii];
      }
      if (i < 5) h = down_[ii].forward(h, ctx ? &ctx->down[ii] : nullptr);
    }
    if (ctx) ctx->had_control = ctrl != nullptr;

    Tensor<S> carry = h;  // deepest encoder features
    for (int j = 0; j < 6; ++j) {
      const std::size_t jj = static_cast<std::size_t>(j);
      const std::size_t si = static_cast<std::size_t>(5 - j);
      if (ctx) {
        ctx->carry_channels[jj] = carry.dim(1);
        ctx->skip_channels[jj] = skips[si].dim(1);
      }
      Tensor<S> in = concat_channels(carry, skips[si]);
      const Mat<S> bias = temb_bias(dec_temb_[jj], t, ctx ? &ctx->dec_temb[jj] : nullptr);
      Tensor<S> out = dec_blocks_[jj].forward(in, bias, ctx ? &ctx->dec[jj] : nullptr);
      carry = UpsampleNearest2<S>::forward(out);
    }
    return head_.forward(carry, ctx ? &ctx->head : nullptr);
  }

  struct BackwardResult {
    Tensor<S> dx;
    ControlSignal<S> dcontrol;  // allocated only if forward saw a control signal
  };

  BackwardResult backward(const Tensor<S>& gout, Ctx& ctx) {
    BackwardResult res;
    Tensor<S> g = head_.backward(gout, ctx.head);
    std::array<Tensor<S>, 6> dskips;
    for (int j = 5; j >= 0; --j) {
      const std::size_t jj = static_cast<std::size_t>(j);
      const std::size_t si = static_cast<std::size_t>(5 - j);
      g = UpsampleNearest2<S>::backward(g);
      Mat<S> dbias = Mat<S>::Zero(dec_temb_[jj].lin2.out_dim, static_cast<Eigen::Index>(g.dim(0)));
      Tensor<S> din = dec_blocks_[jj].backward(g, ctx.dec[jj], &dbias);
      temb_bias_backward(dec_temb_[jj], dbias, ctx.dec_temb[jj]);
      Tensor<S> dcarry, dskip;
      split_channels(din, ctx.carry_channels[jj], dcarry, dskip);
      dskips[si] = std::move(dskip);
      g = std::move(dcarry);
    }
    // g now holds the gradient reaching the deepest encoder output via the
    // carry path; the same tensor also received a skip contribution.
    if (ctx.had_control)
      for (int i = 0; i < 6; ++i) res.dcontrol.maps[static_cast<std::size_t>(i)] =
          dskips[static_cast<std::size_t>(i)];

    Tensor<S> denc = std::move(g);
    for (int i = 5; i >= 0; --i) {
      const std::size_t ii = static_cast<std::size_t>(i);
      if (i < 5) denc = down_[ii].backward(denc, ctx.down[ii]);
      denc += dskips[ii];
      Mat<S> dbias =
          Mat<S>::Zero(enc_temb_[ii].lin2.out_dim, static_cast<Eigen::Index>(denc.dim(0)));
      denc = enc_blocks_[ii].backward(denc, ctx.enc[ii], &dbias);
      temb_bias_backward(enc_temb_[ii], dbias, ctx.enc_temb[ii]);
    }
    res.dx = stem_.backward(denc, ctx.stem);
    return res;
  }

  ParamRefs<S> encoder_params() {
    ParamRefs<S> ps = stem_.params();
    for (int i = 0; i < 6; ++i) {
      append(ps, enc_blocks_[static_cast<std::size_t>(i)].params());
      append(ps, enc_temb_[static_cast<std::size_t>(i)].params());
    }
    for (auto& d : down_) append(ps, d.params());
    return ps;
  }

  ParamRefs<S> decoder_params() {
    ParamRefs<S> ps;
    for (int j = 0; j < 6; ++j) {
      append(ps, dec_blocks_[static_cast<std::size_t>(j)].params());
      append(ps, dec_temb_[static_cast<std::size_t>(j)].params());
    }
    append(ps, head_.params());
    return ps;
  }

  ParamRefs<S> params() {
    ParamRefs<S> ps = encoder_params();
    append(ps, decoder_params());
    return ps;
  }

  // Copy sources for ENC initialization (conv stacks only, no time FFNs).
  const Conv2d<S>& stem() const { return stem_; }
  const std::array<ConvPairBlock<S>, 6>& encoder_blocks() const { return enc_blocks_; }
  const std::array<Conv2d<S>, 5>& downsamplers() const { return down_; }

private:
  static void append(ParamRefs<S>& dst, const ParamRefs<S>& src) {
    dst.insert(dst.end(), src.begin(), src.end());
  }

  Mat<S> temb_bias(const FFN<S>& ffn, const std::vector<int>& t,
                   typename FFN<S>::Ctx* ctx) const {
    const int dim = ffn.lin1.in_dim;
    Mat<S> emb(dim, static_cast<Eigen::Index>(t.size()));
    for (std::size_t b = 0; b < t.size(); ++b)
      emb.col(static_cast<Eigen::Index>(b)) = sinusoidal_embed<S>(t[b], dim);
    return ffn.forward(emb, ctx);
  }

  static void temb_bias_backward(FFN<S>& ffn, const Mat<S>& dbias, typename FFN<S>::Ctx& ctx) {
    ffn.backward(dbias, ctx);  // embedding input needs no gradient
  }

  void check_control_map(const Tensor<S>& map, const Tensor<S>& skip, int i) const {
    if (map.shape() != skip.shape())
      throw WiringError("control map " + std::to_string(i + 1) + " does not match decoder wiring: expected (" +
                        std::to_string(skip.dim(0)) + "," + std::to_string(skip.dim(1)) + "," +
                        std::to_string(skip.dim(2)) + "," + std::to_string(skip.dim(3)) + ")");
  }

  UNetConfig cfg_;
  Conv2d<S> stem_;
  std::array<ConvPairBlock<S>, 6> enc_blocks_;
  std::array<FFN<S>, 6> enc_temb_;
  std::array<Conv2d<S>, 5> down_;
  std::array<ConvPairBlock<S>, 6> dec_blocks_;
  std::array<FFN<S>, 6> dec_temb_;
  Conv2d<S> head_;
};

/// Mean of squared residuals plus its gradient wrt the prediction.
template <class S>
S mse_loss(const Tensor<S>& pred, const Tensor<S>& target, Tensor<S>* grad) {
  if (!pred.same_shape(target)) throw DomainError("mse_loss: shape mismatch");
  const double n = static_cast<double>(pred.size());
  double acc = 0;
  if (grad) *grad = Tensor<S>(pred.shape());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    acc += d * d;
    if (grad) (*grad)[i] = static_cast<S>(2.0 * d / n);
  }
  return static_cast<S>(acc / n);
}

/// Noise x0 with per-image timesteps.
template <class S>
Tensor<S> forward_noise_batch(const Tensor<S>& x0, const std::vector<int>& t,
                              const Tensor<S>& eps, const NoiseSchedule& s) {
  const std::size_t B = x0.dim(0), per = x0.size() / B;
  Tensor<S> out(x0.shape());
  for (std::size_t b = 0; b < B; ++b) {
    s.check_t(t[b]);
    const double ab = s.alpha_bar[static_cast<std::size_t>(t[b])];
    const S c0 = static_cast<S>(std::sqrt(ab));
    const S c1 = static_cast<S>(std::sqrt(1.0 - ab));
    for (std::size_t i = b * per; i < (b + 1) * per; ++i) out[i] = c0 * x0[i] + c1 * eps[i];
  }
  return out;
}

/// Deterministic core of a pre-training step: loss and parameter gradients
/// for fixed (t, eps). Gradients are accumulated, not reset.
template <class S>
S pretrain_loss_and_grad(Denoiser<S>& model, const Tensor<S>& x0, const std::vector<int>& t,
                         const Tensor<S>& eps, const NoiseSchedule& s) {
  Tensor<S> xt = forward_noise_batch(x0, t, eps, s);
  typename Denoiser<S>::Ctx ctx;
  Tensor<S> eps_hat = model.forward(xt, t, nullptr, &ctx);
  Tensor<S> dloss;
  const S loss = mse_loss(eps_hat, eps, &dloss);
  model.backward(dloss, ctx);
  return loss;
}

/// Samples (t, eps) and runs one optimizer update on the denoiser.
template <class S>
S pretrain_step(Denoiser<S>& model, Adam<S>& opt, const Tensor<S>& x0, const NoiseSchedule& s,
                Rng& rng) {
  ParamRefs<S> ps = model.params();
  if (any_frozen(ps)) throw StateError("pretrain_step: denoiser weights are frozen");
  const std::size_t B = x0.dim(0);
  std::vector<int> t(B);
  for (std::size_t b = 0; b < B; ++b) t[b] = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(s.T)));
  Tensor<S> eps(x0.shape());
  rng.fill_gaussian(eps);
  zero_grads(ps);
  const S loss = pretrain_loss_and_grad(model, x0, t, eps, s);
  opt.step(ps);
  return loss;
}

/// Ancestral sampling from pure noise. `control_fn`, when set, supplies the
/// control signal for each timestep; z is forced to zero for t <= 1.
template <class S>
Tensor<S> sample_nchw(const std::vector<std::size_t>& shape, const Denoiser<S>& model,
                      const NoiseSchedule& s, std::uint64_t seed,
                      const std::function<ControlSignal<S>(int)>* control_fn) {
  Rng rng = Rng(seed).derive(0x5a);
  Tensor<S> x(shape);
  rng.fill_gaussian(x);
  const std::size_t B = shape[0];
  Tensor<S> z(shape);
  for (int t = s.T - 1; t >= 0; --t) {
    std::vector<int> tv(B, t);
    ControlSignal<S> ctrl;
    const ControlSignal<S>* cp = nullptr;
    if (control_fn) {
      ctrl = (*control_fn)(t);
      cp = &ctrl;
    }
    Tensor<S> eps_hat = model.forward(x, tv, cp, nullptr);
    if (t > 1)
      rng.fill_gaussian(z);
    else
      z.set_zero();
    x = posterior_step(x, eps_hat, t, z, s);
    if (!x.all_finite())
      throw NumericError("sample: non-finite state at timestep " + std::to_string(t));
  }
  return x;
}

/// ImageBatch wrapper over sample_nchw; output clamped to the [0,1] range.
template <class S>
ImageBatch sample(std::size_t B, std::size_t c, std::size_t h, std::size_t w,
                  const Denoiser<S>& model, const NoiseSchedule& s, std::uint64_t seed,
                  const std::function<ControlSignal<S>(int)>* control_fn = nullptr) {
  Tensor<S> x = sample_nchw({B, c, h, w}, model, s, seed, control_fn);
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = std::clamp(x[i], S(0), S(1));
  return ImageBatch::from_nchw(x, kUnknownDrf, DoseRole::FullDose);
}

}  // namespace dcdm
