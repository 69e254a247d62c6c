// Copyright 2026 The DCDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "dcdm/container.hpp"
#include "dcdm/errors.hpp"
#include "dcdm/tensor.hpp"

namespace dcdm {

/// Named trainable array with its gradient accumulator. Backward passes skip
/// accumulation when `frozen` is set; input gradients still propagate.
template <class S>
struct Parameter {
  std::string name;
  Tensor<S> value;
  Tensor<S> grad;
  bool frozen = false;

  void setup(std::string n, std::vector<std::size_t> shape) {
    name = std::move(n);
    value = Tensor<S>(shape);
    grad = Tensor<S>(std::move(shape));
  }
  void zero_grad() { grad.set_zero(); }
};

template <class S>
using ParamRefs = std::vector<Parameter<S>*>;

template <class S>
void zero_grads(const ParamRefs<S>& ps) {
  for (auto* p : ps) p->zero_grad();
}

template <class S>
void set_frozen(const ParamRefs<S>& ps, bool frozen) {
  for (auto* p : ps) p->frozen = frozen;
}

template <class S>
bool any_frozen(const ParamRefs<S>& ps) {
  for (auto* p : ps)
    if (p->frozen) return true;
  return false;
}

template <class S>
std::size_t param_count(const ParamRefs<S>& ps) {
  std::size_t n = 0;
  for (auto* p : ps) n += p->value.size();
  return n;
}

template <class S>
double grad_sq_norm(const ParamRefs<S>& ps) {
  double s = 0;
  for (auto* p : ps)
    for (std::size_t i = 0; i < p->grad.size(); ++i)
      s += static_cast<double>(p->grad[i]) * static_cast<double>(p->grad[i]);
  return s;
}

/// Content hash over names, shapes and raw value bytes, in enumeration order.
template <class S>
std::uint64_t params_hash(const ParamRefs<S>& ps) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (auto* p : ps) {
    h = fnv1a64(p->name.data(), p->name.size(), h);
    for (std::size_t d : p->value.shape()) {
      std::uint64_t dd = d;
      h = fnv1a64(&dd, sizeof dd, h);
    }
    h = fnv1a64(p->value.data(), sizeof(S) * p->value.size(), h);
  }
  return h;
}

/// Throws StateError if a frozen parameter carries non-zero gradient.
template <class S>
void check_frozen_grads_zero(const ParamRefs<S>& ps) {
  for (auto* p : ps) {
    if (!p->frozen) continue;
    for (std::size_t i = 0; i < p->grad.size(); ++i)
      if (p->grad[i] != S(0))
        throw StateError("frozen parameter '" + p->name + "' received a gradient update");
  }
}

/// Decoupled-weight-decay Adam. State is keyed per parameter object.
template <class S>
class Adam {
public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8,
                double weight_decay = 0.0)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), wd_(weight_decay) {}

  void step(const ParamRefs<S>& ps) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (auto* p : ps) {
      if (p->frozen) continue;
      State& st = state_[p];
      if (st.m.size() != p->value.size()) {
        st.m = Tensor<double>(p->value.shape());
        st.v = Tensor<double>(p->value.shape());
      }
      for (std::size_t i = 0; i < p->value.size(); ++i) {
        const double g = static_cast<double>(p->grad[i]);
        st.m[i] = beta1_ * st.m[i] + (1.0 - beta1_) * g;
        st.v[i] = beta2_ * st.v[i] + (1.0 - beta2_) * g * g;
        const double mhat = st.m[i] / bc1;
        const double vhat = st.v[i] / bc2;
        double val = static_cast<double>(p->value[i]);
        val -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + wd_ * val);
        p->value[i] = static_cast<S>(val);
      }
    }
  }

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

private:
  struct State {
    Tensor<double> m, v;
  };
  double lr_, beta1_, beta2_, eps_, wd_;
  long t_ = 0;
  std::unordered_map<Parameter<S>*, State> state_;
};

}  // namespace dcdm
