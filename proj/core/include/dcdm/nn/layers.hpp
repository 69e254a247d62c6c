// Copyright 2026 The DCDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "dcdm/nn/param.hpp"
#include "dcdm/rng.hpp"
#include "dcdm/tensor.hpp"

namespace dcdm {

// Layers operate on NCHW image tensors (B, C, H, W) or on column-batched
// Eigen matrices (features x batch). Every layer exposes
//   forward(x, Ctx*)   const when ctx collection is separate from weights
//   backward(gout, Ctx&) -> grad wrt input, accumulating parameter grads
// Parameter gradients are skipped for frozen parameters; input gradients
// always flow.

namespace detail {

template <class S>
using EMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;  // col-major
template <class S>
using ERowMap = Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <class S>
using ERowMapC =
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

inline int conv_out_dim(int in, int k, int stride, int pad) {
  return (in + 2 * pad - k) / stride + 1;
}

/// Unfold one (C,H,W) plane into (C*k*k) x (Ho*Wo), zero padding outside.
template <class S>
void im2col(const S* x, int C, int H, int W, int k, int stride, int pad, EMat<S>& col) {
  const int Ho = conv_out_dim(H, k, stride, pad);
  const int Wo = conv_out_dim(W, k, stride, pad);
  col.resize(C * k * k, Ho * Wo);
  for (int oy = 0; oy < Ho; ++oy) {
    for (int ox = 0; ox < Wo; ++ox) {
      S* dst = col.data() + static_cast<std::ptrdiff_t>(oy * Wo + ox) * (C * k * k);
      for (int c = 0; c < C; ++c) {
        const S* plane = x + static_cast<std::ptrdiff_t>(c) * H * W;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * stride - pad + ky;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * stride - pad + kx;
            *dst++ = (iy >= 0 && iy < H && ix >= 0 && ix < W)
                         ? plane[static_cast<std::ptrdiff_t>(iy) * W + ix]
                         : S(0);
          }
        }
      }
    }
  }
}

/// Scatter-add the unfolded gradient back onto a (C,H,W) plane.
template <class S>
void col2im(const EMat<S>& col, int C, int H, int W, int k, int stride, int pad, S* dx) {
  const int Ho = conv_out_dim(H, k, stride, pad);
  const int Wo = conv_out_dim(W, k, stride, pad);
  for (int oy = 0; oy < Ho; ++oy) {
    for (int ox = 0; ox < Wo; ++ox) {
      const S* src = col.data() + static_cast<std::ptrdiff_t>(oy * Wo + ox) * (C * k * k);
      for (int c = 0; c < C; ++c) {
        S* plane = dx + static_cast<std::ptrdiff_t>(c) * H * W;
        for (int ky = 0; ky < k; ++ky) {
          const int iy = oy * stride - pad + ky;
          for (int kx = 0; kx < k; ++kx) {
            const int ix = ox * stride - pad + kx;
            if (iy >= 0 && iy < H && ix >= 0 && ix < W)
              plane[static_cast<std::ptrdiff_t>(iy) * W + ix] += *src;
            ++src;
          }
        }
      }
    }
  }
}

}  // namespace detail

/// Largest group count <= 8 dividing the channel count.
inline int pick_groups(int channels) {
  int g = std::min(8, channels);
  while (channels % g != 0) --g;
  return g;
}

template <class S>
struct Conv2d {
  int in_ch = 0, out_ch = 0, k = 1, stride = 1, pad = 0;
  bool has_bias = true;
  Parameter<S> weight;  // (out_ch, in_ch*k*k)
  Parameter<S> bias;    // (out_ch)

  struct Ctx {
    Tensor<S> input;
  };

  void init(const std::string& name, int in_c, int out_c, int kk, int ss, int pp, Rng& rng,
            bool zero_init = false, bool with_bias = true) {
    in_ch = in_c;
    out_ch = out_c;
    k = kk;
    stride = ss;
    pad = pp;
    has_bias = with_bias;
    weight.setup(name + ".weight",
                 {static_cast<std::size_t>(out_c), static_cast<std::size_t>(in_c * kk * kk)});
    if (with_bias) bias.setup(name + ".bias", {static_cast<std::size_t>(out_c)});
    if (!zero_init) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(in_c * kk * kk));
      rng.fill_uniform(weight.value, -bound, bound);
      if (with_bias) rng.fill_uniform(bias.value, -bound, bound);
    }
  }

  std::array<int, 2> out_hw(int H, int W) const {
    return {detail::conv_out_dim(H, k, stride, pad), detail::conv_out_dim(W, k, stride, pad)};
  }

  Tensor<S> forward(const Tensor<S>& x, Ctx* ctx) const {
    const int B = static_cast<int>(x.dim(0)), C = static_cast<int>(x.dim(1)),
              H = static_cast<int>(x.dim(2)), W = static_cast<int>(x.dim(3));
    if (C != in_ch)
      throw WiringError("Conv2d " + weight.name + ": expected " + std::to_string(in_ch) +
                        " input channels, got " + std::to_string(C));
    const auto [Ho, Wo] = out_hw(H, W);
    Tensor<S> y({static_cast<std::size_t>(B), static_cast<std::size_t>(out_ch),
                 static_cast<std::size_t>(Ho), static_cast<std::size_t>(Wo)});
    detail::ERowMapC<S> Wm(weight.value.data(), out_ch, in_ch * k * k);
    detail::EMat<S> col;
    for (int b = 0; b < B; ++b) {
      detail::im2col(x.data() + static_cast<std::ptrdiff_t>(b) * C * H * W, C, H, W, k, stride,
                     pad, col);
      detail::ERowMap<S> Ym(y.data() + static_cast<std::ptrdiff_t>(b) * out_ch * Ho * Wo, out_ch,
                            Ho * Wo);
      Ym.noalias() = Wm * col;
      if (has_bias)
        for (int c = 0; c < out_ch; ++c)
          Ym.row(c).array() += bias.value[static_cast<std::size_t>(c)];
    }
    if (ctx) ctx->input = x;
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gout, const Ctx& ctx) {
    const Tensor<S>& x = ctx.input;
    const int B = static_cast<int>(x.dim(0)), C = static_cast<int>(x.dim(1)),
              H = static_cast<int>(x.dim(2)), W = static_cast<int>(x.dim(3));
    const auto [Ho, Wo] = out_hw(H, W);
    Tensor<S> dx(x.shape());
    detail::ERowMapC<S> Wm(weight.value.data(), out_ch, in_ch * k * k);
    detail::ERowMap<S> dWm(weight.grad.data(), out_ch, in_ch * k * k);
    detail::EMat<S> col, dcol;
    for (int b = 0; b < B; ++b) {
      detail::im2col(x.data() + static_cast<std::ptrdiff_t>(b) * C * H * W, C, H, W, k, stride,
                     pad, col);
      detail::ERowMapC<S> Gm(gout.data() + static_cast<std::ptrdiff_t>(b) * out_ch * Ho * Wo,
                             out_ch, Ho * Wo);
      if (!weight.frozen) dWm.noalias() += Gm * col.transpose();
      if (has_bias && !bias.frozen)
        for (int c = 0; c < out_ch; ++c)
          bias.grad[static_cast<std::size_t>(c)] += Gm.row(c).sum();
      dcol.noalias() = Wm.transpose() * Gm;
      detail::col2im(dcol, C, H, W, k, stride, pad,
                     dx.data() + static_cast<std::ptrdiff_t>(b) * C * H * W);
    }
    return dx;
  }

  ParamRefs<S> params() {
    if (has_bias) return {&weight, &bias};
    return {&weight};
  }
};

template <class S>
struct GroupNorm {
  int channels = 0, groups = 1;
  double eps = 1e-5;
  Parameter<S> gamma, beta;

  struct Ctx {
    Tensor<S> xhat;
    std::vector<double> rstd;  // per (b, group)
  };

  void init(const std::string& name, int C) {
    channels = C;
    groups = pick_groups(C);
    gamma.setup(name + ".gamma", {static_cast<std::size_t>(C)});
    beta.setup(name + ".beta", {static_cast<std::size_t>(C)});
    gamma.value.fill(S(1));
  }

  Tensor<S> forward(const Tensor<S>& x, Ctx* ctx) const {
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const std::size_t cg = C / static_cast<std::size_t>(groups);
    const std::size_t gsize = cg * H * W;
    Tensor<S> y(x.shape());
    Tensor<S> xhat(x.shape());
    std::vector<double> rstds(B * static_cast<std::size_t>(groups));
    for (std::size_t b = 0; b < B; ++b) {
      for (int g = 0; g < groups; ++g) {
        const std::size_t base = (b * C + static_cast<std::size_t>(g) * cg) * H * W;
        double mean = 0;
        for (std::size_t i = 0; i < gsize; ++i) mean += static_cast<double>(x[base + i]);
        mean /= static_cast<double>(gsize);
        double var = 0;
        for (std::size_t i = 0; i < gsize; ++i) {
          const double d = static_cast<double>(x[base + i]) - mean;
          var += d * d;
        }
        var /= static_cast<double>(gsize);
        const double rstd = 1.0 / std::sqrt(var + eps);
        rstds[b * static_cast<std::size_t>(groups) + static_cast<std::size_t>(g)] = rstd;
        for (std::size_t c = 0; c < cg; ++c) {
          const std::size_t ch = static_cast<std::size_t>(g) * cg + c;
          const S ga = gamma.value[ch], be = beta.value[ch];
          const std::size_t off = (b * C + ch) * H * W;
          for (std::size_t i = 0; i < H * W; ++i) {
            const double xh = (static_cast<double>(x[off + i]) - mean) * rstd;
            xhat[off + i] = static_cast<S>(xh);
            y[off + i] = static_cast<S>(xh) * ga + be;
          }
        }
      }
    }
    if (ctx) {
      ctx->xhat = std::move(xhat);
      ctx->rstd = std::move(rstds);
    }
    return y;
  }

  Tensor<S> backward(const Tensor<S>& gout, const Ctx& ctx) {
    const Tensor<S>& xhat = ctx.xhat;
    const std::size_t B = gout.dim(0), C = gout.dim(1), H = gout.dim(2), W = gout.dim(3);
    const std::size_t cg = C / static_cast<std::size_t>(groups);
    const double M = static_cast<double>(cg * H * W);
    Tensor<S> dx(gout.shape());
    for (std::size_t b = 0; b < B; ++b) {
      for (int g = 0; g < groups; ++g) {
        const double rstd = ctx.rstd[b * static_cast<std::size_t>(groups) + static_cast<std::size_t>(g)];
        // Accumulate group sums of dxhat and dxhat*xhat.
        double s1 = 0, s2 = 0;
        for (std::size_t c = 0; c < cg; ++c) {
          const std::size_t ch = static_cast<std::size_t>(g) * cg + c;
          const double ga = static_cast<double>(gamma.value[ch]);
          const std::size_t off = (b * C + ch) * H * W;
          for (std::size_t i = 0; i < H * W; ++i) {
            const double dxh = static_cast<double>(gout[off + i]) * ga;
            s1 += dxh;
            s2 += dxh * static_cast<double>(xhat[off + i]);
          }
        }
        for (std::size_t c = 0; c < cg; ++c) {
          const std::size_t ch = static_cast<std::size_t>(g) * cg + c;
          const double ga = static_cast<double>(gamma.value[ch]);
          const std::size_t off = (b * C + ch) * H * W;
          double dga = 0, dbe = 0;
          for (std::size_t i = 0; i < H * W; ++i) {
            const double go = static_cast<double>(gout[off + i]);
            const double xh = static_cast<double>(xhat[off + i]);
            const double dxh = go * ga;
            dx[off + i] = static_cast<S>(rstd * (dxh - (s1 + xh * s2) / M));
            dga += go * xh;
            dbe += go;
          }
          if (!gamma.frozen) gamma.grad[ch] += static_cast<S>(dga);
          if (!beta.frozen) beta.grad[ch] += static_cast<S>(dbe);
        }
      }
    }
    return dx;
  }

  ParamRefs<S> params() { return {&gamma, &beta}; }
};

template <class S>
struct SiLU {
  struct Ctx {
    Tensor<S> input;
  };
  static Tensor<S> forward(const Tensor<S>& x, Ctx* ctx) {
    Tensor<S> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double v = static_cast<double>(x[i]);
      y[i] = static_cast<S>(v / (1.0 + std::exp(-v)));
    }
    if (ctx) ctx->input = x;
    return y;
  }
  static Tensor<S> backward(const Tensor<S>& gout, const Ctx& ctx) {
    Tensor<S> dx(gout.shape());
    for (std::size_t i = 0; i < gout.size(); ++i) {
      const double v = static_cast<double>(ctx.input[i]);
      const double s = 1.0 / (1.0 + std::exp(-v));
      dx[i] = static_cast<S>(static_cast<double>(gout[i]) * s * (1.0 + v * (1.0 - s)));
    }
    return dx;
  }
};

/// Dense layer on column-batched matrices: Y = W X + b 1^T.
template <class S>
struct Linear {
  int in_dim = 0, out_dim = 0;
  Parameter<S> weight;  // (out, in)
  Parameter<S> bias;    // (out)

  struct Ctx {
    Mat<S> input;
  };

  void init(const std::string& name, int in_d, int out_d, Rng& rng, bool zero_init = false) {
    in_dim = in_d;
    out_dim = out_d;
    weight.setup(name + ".weight",
                 {static_cast<std::size_t>(out_d), static_cast<std::size_t>(in_d)});
    bias.setup(name + ".bias", {static_cast<std::size_t>(out_d)});
    if (!zero_init) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(in_d));
      rng.fill_uniform(weight.value, -bound, bound);
      rng.fill_uniform(bias.value, -bound, bound);
    }
  }

  Mat<S> forward(const Mat<S>& X, Ctx* ctx) const {
    if (X.rows() != in_dim)
      throw WiringError("Linear " + weight.name + ": expected input dim " +
                        std::to_string(in_dim) + ", got " + std::to_string(X.rows()));
    detail::ERowMapC<S> Wm(weight.value.data(), out_dim, in_dim);
    Mat<S> Y = Wm * X;
    for (int c = 0; c < out_dim; ++c)
      Y.row(c).array() += bias.value[static_cast<std::size_t>(c)];
    if (ctx) ctx->input = X;
    return Y;
  }

  Mat<S> backward(const Mat<S>& G, const Ctx& ctx) {
    detail::ERowMapC<S> Wm(weight.value.data(), out_dim, in_dim);
    if (!weight.frozen) {
      detail::ERowMap<S> dWm(weight.grad.data(), out_dim, in_dim);
      dWm.noalias() += G * ctx.input.transpose();
    }
    if (!bias.frozen)
      for (int c = 0; c < out_dim; ++c) bias.grad[static_cast<std::size_t>(c)] += G.row(c).sum();
    return Wm.transpose() * G;
  }

  ParamRefs<S> params() { return {&weight, &bias}; }
};

template <class S>
Mat<S> silu_mat(const Mat<S>& x) {
  return x.unaryExpr([](S v) {
    const double d = static_cast<double>(v);
    return static_cast<S>(d / (1.0 + std::exp(-d)));
  });
}

template <class S>
Mat<S> silu_mat_grad(const Mat<S>& x, const Mat<S>& g) {
  Mat<S> out(x.rows(), x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double v = static_cast<double>(x(i, j));
      const double s = 1.0 / (1.0 + std::exp(-v));
      out(i, j) = static_cast<S>(static_cast<double>(g(i, j)) * s * (1.0 + v * (1.0 - s)));
    }
  return out;
}

/// Two linear layers around a SiLU; the hidden width is out_dim/4 unless
/// given explicitly (concatenated two-variable inputs keep the same hidden).
template <class S>
struct FFN {
  Linear<S> lin1, lin2;
  int hidden = 0;

  struct Ctx {
    typename Linear<S>::Ctx l1, l2;
    Mat<S> pre;  // lin1 output, pre-activation
  };

  void init(const std::string& name, int in_d, int out_d, Rng& rng) {
    if (out_d % 4 != 0)
      throw ConfigError("FFN " + name + ": output dim " + std::to_string(out_d) +
                        " must be divisible by 4");
    init_hidden(name, in_d, out_d / 4, out_d, rng);
  }

  void init_hidden(const std::string& name, int in_d, int hid, int out_d, Rng& rng) {
    hidden = hid;
    lin1.init(name + ".lin1", in_d, hid, rng);
    lin2.init(name + ".lin2", hid, out_d, rng);
  }

  Mat<S> forward(const Mat<S>& X, Ctx* ctx) const {
    Mat<S> pre = lin1.forward(X, ctx ? &ctx->l1 : nullptr);
    Mat<S> act = silu_mat(pre);
    Mat<S> out = lin2.forward(act, ctx ? &ctx->l2 : nullptr);
    if (ctx) ctx->pre = std::move(pre);
    return out;
  }

  Mat<S> backward(const Mat<S>& G, Ctx& ctx) {
    Mat<S> dact = lin2.backward(G, ctx.l2);
    Mat<S> dpre = silu_mat_grad(ctx.pre, dact);
    return lin1.backward(dpre, ctx.l1);
  }

  ParamRefs<S> params() {
    ParamRefs<S> ps = lin1.params();
    for (auto* p : lin2.params()) ps.push_back(p);
    return ps;
  }
};

/// Sinusoidal timestep embedding of even dimension `dim`.
template <class S>
Vec<S> sinusoidal_embed(int t, int dim) {
  Vec<S> e(dim);
  const int half = dim / 2;
  for (int i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) /
                                 static_cast<double>(std::max(1, half)));
    e[i] = static_cast<S>(std::sin(t * freq));
    e[half + i] = static_cast<S>(std::cos(t * freq));
  }
  if (dim % 2 == 1) e[dim - 1] = S(0);
  return e;
}

template <class S>
struct UpsampleNearest2 {
  static Tensor<S> forward(const Tensor<S>& x) {
    const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    Tensor<S> y({B, C, 2 * H, 2 * W});
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < H; ++i)
          for (std::size_t j = 0; j < W; ++j) {
            const S v = x[((b * C + c) * H + i) * W + j];
            const std::size_t base = ((b * C + c) * 2 * H + 2 * i) * 2 * W + 2 * j;
            y[base] = v;
            y[base + 1] = v;
            y[base + 2 * W] = v;
            y[base + 2 * W + 1] = v;
          }
    return y;
  }
  static Tensor<S> backward(const Tensor<S>& g) {
    const std::size_t B = g.dim(0), C = g.dim(1), H2 = g.dim(2), W2 = g.dim(3);
    const std::size_t H = H2 / 2, W = W2 / 2;
    Tensor<S> dx({B, C, H, W});
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < H; ++i)
          for (std::size_t j = 0; j < W; ++j) {
            const std::size_t base = ((b * C + c) * H2 + 2 * i) * W2 + 2 * j;
            dx[((b * C + c) * H + i) * W + j] =
                g[base] + g[base + 1] + g[base + W2] + g[base + W2 + 1];
          }
    return dx;
  }
};

/// conv(3x3) -> group norm -> SiLU
template <class S>
struct ConvBlock {
  Conv2d<S> conv;
  GroupNorm<S> norm;

  struct Ctx {
    typename Conv2d<S>::Ctx c;
    typename GroupNorm<S>::Ctx n;
    typename SiLU<S>::Ctx a;
  };

  void init(const std::string& name, int in_c, int out_c, Rng& rng) {
    // No conv bias: the following normalization would cancel it exactly.
    conv.init(name + ".conv", in_c, out_c, 3, 1, 1, rng, /*zero_init=*/false,
              /*with_bias=*/false);
    norm.init(name + ".norm", out_c);
  }

  Tensor<S> forward(const Tensor<S>& x, Ctx* ctx) const {
    Tensor<S> h = conv.forward(x, ctx ? &ctx->c : nullptr);
    h = norm.forward(h, ctx ? &ctx->n : nullptr);
    return SiLU<S>::forward(h, ctx ? &ctx->a : nullptr);
  }

  Tensor<S> backward(const Tensor<S>& g, Ctx& ctx) {
    Tensor<S> d = SiLU<S>::backward(g, ctx.a);
    d = norm.backward(d, ctx.n);
    return conv.backward(d, ctx.c);
  }

  ParamRefs<S> params() {
    ParamRefs<S> ps = conv.params();
    for (auto* p : norm.params()) ps.push_back(p);
    return ps;
  }
};

/// Shared block shape of the denoiser encoder/decoder and EN blocks:
///   out = ConvBlock2(ConvBlock1(x) + bias)
/// where `bias` is a per-image, per-channel vector broadcast over space
/// (time embedding or modulation feature, depending on the owner).
template <class S>
struct ConvPairBlock {
  ConvBlock<S> cb1, cb2;

  struct Ctx {
    typename ConvBlock<S>::Ctx c1, c2;
  };

  void init(const std::string& name, int in_c, int out_c, Rng& rng) {
    cb1.init(name + ".cb1", in_c, out_c, rng);
    cb2.init(name + ".cb2", out_c, out_c, rng);
  }

  int out_channels() const { return cb2.conv.out_ch; }

  /// `bias` is (C x B); pass an empty matrix for no injection.
  Tensor<S> forward(const Tensor<S>& x, const Mat<S>& bias, Ctx* ctx) const {
    Tensor<S> h = cb1.forward(x, ctx ? &ctx->c1 : nullptr);
    if (bias.size() > 0) add_channel_bias(h, bias);
    return cb2.forward(h, ctx ? &ctx->c2 : nullptr);
  }

  /// Returns grad wrt x; accumulates the bias gradient into `dbias` (C x B)
  /// when provided.
  Tensor<S> backward(const Tensor<S>& g, Ctx& ctx, Mat<S>* dbias) {
    Tensor<S> dh = cb2.backward(g, ctx.c2);
    if (dbias) {
      const std::size_t B = dh.dim(0), C = dh.dim(1), HW = dh.dim(2) * dh.dim(3);
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t c = 0; c < C; ++c) {
          double s = 0;
          const std::size_t off = (b * C + c) * HW;
          for (std::size_t i = 0; i < HW; ++i) s += static_cast<double>(dh[off + i]);
          (*dbias)(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(b)) +=
              static_cast<S>(s);
        }
    }
    return cb1.backward(dh, ctx.c1);
  }

  static void add_channel_bias(Tensor<S>& x, const Mat<S>& bias) {
    const std::size_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t c = 0; c < C; ++c) {
        const S v = bias(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(b));
        const std::size_t off = (b * C + c) * HW;
        for (std::size_t i = 0; i < HW; ++i) x[off + i] += v;
      }
  }

  ParamRefs<S> params() {
    ParamRefs<S> ps = cb1.params();
    for (auto* p : cb2.params()) ps.push_back(p);
    return ps;
  }
};

template <class S>
Tensor<S> concat_channels(const Tensor<S>& a, const Tensor<S>& b) {
  const std::size_t B = a.dim(0), Ca = a.dim(1), Cb = b.dim(1), H = a.dim(2), W = a.dim(3);
  if (b.dim(0) != B || b.dim(2) != H || b.dim(3) != W)
    throw WiringError("concat_channels: incompatible shapes");
  Tensor<S> out({B, Ca + Cb, H, W});
  const std::size_t plane = H * W;
  for (std::size_t bi = 0; bi < B; ++bi) {
    std::copy_n(a.data() + bi * Ca * plane, Ca * plane, out.data() + bi * (Ca + Cb) * plane);
    std::copy_n(b.data() + bi * Cb * plane, Cb * plane,
                out.data() + (bi * (Ca + Cb) + Ca) * plane);
  }
  return out;
}

template <class S>
void split_channels(const Tensor<S>& g, std::size_t ca, Tensor<S>& ga, Tensor<S>& gb) {
  const std::size_t B = g.dim(0), C = g.dim(1), H = g.dim(2), W = g.dim(3);
  const std::size_t cb = C - ca;
  ga = Tensor<S>({B, ca, H, W});
  gb = Tensor<S>({B, cb, H, W});
  const std::size_t plane = H * W;
  for (std::size_t bi = 0; bi < B; ++bi) {
    std::copy_n(g.data() + bi * C * plane, ca * plane, ga.data() + bi * ca * plane);
    std::copy_n(g.data() + (bi * C + ca) * plane, cb * plane, gb.data() + bi * cb * plane);
  }
}

}  // namespace dcdm
