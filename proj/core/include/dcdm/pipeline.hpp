// Copyright 2026 The DCDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <vector>

#include "dcdm/denoiser.hpp"
#include "dcdm/enc.hpp"
#include "dcdm/ntc.hpp"

namespace dcdm {

/// Deterministic core of one double-constraint training step: fixed (t, eps),
/// loss and Theta_C gradients. The frozen denoiser and NTC are only read.
template <class S>
S dcdm_train_loss(Denoiser<S>& denoiser, const Ntc<S>& ntc, Enc<S>& enc,
                  const Tensor<S>& x_full, const Tensor<S>& x_low, const NoiseSchedule& s,
                  const std::vector<int>& t, const Tensor<S>& eps) {
  auto ntc_out = ntc.forward(x_low, nullptr);
  typename Enc<S>::Ctx enc_ctx;
  ControlSignal<S> ctrl = enc.forward(x_low, ntc_out.pooled, t, &enc_ctx);
  Tensor<S> xt = forward_noise_batch(x_full, t, eps, s);
  typename Denoiser<S>::Ctx den_ctx;
  Tensor<S> eps_hat = denoiser.forward(xt, t, &ctrl, &den_ctx);
  Tensor<S> dloss;
  const S loss = mse_loss(eps_hat, eps, &dloss);
  auto back = denoiser.backward(dloss, den_ctx);
  enc.backward(back.dcontrol, enc_ctx);
  return loss;
}

/// Algorithm "prior learning" step: samples (t, eps), updates Theta_C only,
/// and audits that every frozen store stayed gradient-free.
template <class S>
S dcdm_train_step(Denoiser<S>& denoiser, Ntc<S>& ntc, Enc<S>& enc, Adam<S>& opt,
                  const Tensor<S>& x_full, const Tensor<S>& x_low, const NoiseSchedule& s,
                  Rng& rng) {
  ParamRefs<S> frozen = denoiser.params();
  for (auto* p : ntc.params()) frozen.push_back(p);
  for (auto* p : frozen)
    if (!p->frozen)
      throw StateError("dcdm_train_step: parameter '" + p->name +
                       "' must be frozen during double-constraint training");
  ParamRefs<S> trainable = enc.params();
  if (any_frozen(trainable))
    throw StateError("dcdm_train_step: ENC weights must be trainable");

  const std::size_t B = x_full.dim(0);
  std::vector<int> t(B);
  for (std::size_t b = 0; b < B; ++b)
    t[b] = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(s.T)));
  Tensor<S> eps(x_full.shape());
  rng.fill_gaussian(eps);

  zero_grads(trainable);
  zero_grads(frozen);  // so the audit below sees exactly this step's writes
  const S loss = dcdm_train_loss(denoiser, ntc, enc, x_full, x_low, s, t, eps);
  check_frozen_grads_zero(frozen);
  opt.step(trainable);
  return loss;
}

/// Iterative reconstruction: tokens computed once, the control signal
/// refreshed every timestep, noise z forced to zero for t <= 1.
template <class S>
ImageBatch dcdm_reconstruct(const ImageBatch& x_low, Denoiser<S>& denoiser, const Ntc<S>& ntc,
                            const Enc<S>& enc, const NoiseSchedule& s, std::uint64_t seed) {
  x_low.validate();
  Tensor<S> low = x_low.to_nchw<S>();
  auto ntc_out = ntc.forward(low, nullptr);
  const std::size_t B = low.dim(0);
  std::function<ControlSignal<S>(int)> control_fn = [&](int t) {
    std::vector<int> tv(B, t);
    return enc.forward(low, ntc_out.pooled, tv, nullptr);
  };
  Tensor<S> x = sample_nchw(low.shape(), denoiser, s, seed, &control_fn);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], S(0), S(1));
  ImageBatch out = ImageBatch::from_nchw(x, x_low.drf, DoseRole::FullDose);
  return out;
}

/// Trained per-dose-level ENC weights plus the shared classifier levels.
template <class S>
struct EncBank {
  std::map<int, Enc<S>> entries;  // keyed by drf level
  std::vector<int> levels;        // classifier class order (descending DRF)
};

struct RoutingDecision {
  int drf = 0;
  int class_index = -1;
  std::vector<double> probabilities;
};

/// Classifier argmax with ties broken toward the higher DRF. For batches the
/// per-image probability vectors are averaged before the argmax.
template <class S>
RoutingDecision route_unknown_drf(const ImageBatch& x_low, const Ntc<S>& ntc,
                                  const EncBank<S>& bank) {
  if (bank.entries.empty()) throw RoutingError("route_unknown_drf: empty ENC bank");
  Tensor<S> low = x_low.to_nchw<S>();
  auto out = ntc.forward(low, nullptr);
  Mat<S> probs = softmax_cols_public(out.logits);
  const Eigen::Index K = probs.rows(), B = probs.cols();
  RoutingDecision dec;
  dec.probabilities.resize(static_cast<std::size_t>(K));
  for (Eigen::Index k = 0; k < K; ++k) {
    double m = 0;
    for (Eigen::Index b = 0; b < B; ++b) m += static_cast<double>(probs(k, b));
    dec.probabilities[static_cast<std::size_t>(k)] = m / static_cast<double>(B);
  }
  if (bank.levels.size() != static_cast<std::size_t>(K))
    throw RoutingError("route_unknown_drf: class count does not match level list");
  double best = -1;
  for (Eigen::Index k = 0; k < K; ++k) {
    const double p = dec.probabilities[static_cast<std::size_t>(k)];
    const int level = bank.levels[static_cast<std::size_t>(k)];
    if (p > best || (p == best && level > dec.drf)) {
      best = p;
      dec.drf = level;
      dec.class_index = static_cast<int>(k);
    }
  }
  if (bank.entries.find(dec.drf) == bank.entries.end()) {
    std::string avail;
    for (const auto& [lvl, _] : bank.entries) avail += (avail.empty() ? "" : ", ") + std::to_string(lvl);
    throw RoutingError("route_unknown_drf: predicted DRF " + std::to_string(dec.drf) +
                       " has no bank entry; available levels: " + avail);
  }
  return dec;
}

template <class S>
struct UnknownReconstruction {
  ImageBatch image;
  RoutingDecision decision;
};

/// Route, then reconstruct with the selected ENC.
template <class S>
UnknownReconstruction<S> reconstruct_unknown(const ImageBatch& x_low, Denoiser<S>& denoiser,
                                             const Ntc<S>& ntc, EncBank<S>& bank,
                                             const NoiseSchedule& s, std::uint64_t seed) {
  UnknownReconstruction<S> out;
  out.decision = route_unknown_drf(x_low, ntc, bank);
  out.image = dcdm_reconstruct(x_low, denoiser, ntc, bank.entries.at(out.decision.drf), s, seed);
  return out;
}

/// Per-step RNG derivation: resuming at step k reproduces the stream.
inline Rng step_rng(std::uint64_t seed, std::uint64_t step) {
  return Rng(seed).derive(0x7261 + step);
}

}  // namespace dcdm
