// Copyright 2026 The DCDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>

#include "dcdm/tensor.hpp"

namespace dcdm {

/// Six multi-resolution feature maps injected into the frozen decoder.
/// maps[i] lives at spatial resolution input/2^(i+1) with the channel width
/// of encoder block i+1; maps[5] is the deepest.
template <class S>
struct ControlSignal {
  std::array<Tensor<S>, 6> maps;

  bool allocated() const { return !maps[0].empty(); }

  void set_zero() {
    for (auto& m : maps) m.set_zero();
  }

  bool all_zero() const {
    for (const auto& m : maps)
      for (std::size_t i = 0; i < m.size(); ++i)
        if (m[i] != S(0)) return false;
    return true;
  }
};

}  // namespace dcdm
