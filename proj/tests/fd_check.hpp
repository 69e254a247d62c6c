// Copyright 2026 The DCDM Authors
// SPDX-License-Identifier: Apache-2.0
//
// Central finite-difference gradient oracle used across the test suites.
// Kept in test code so the checked implementations never see it.

#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "dcdm/nn/param.hpp"

namespace dcdm::testing {

struct FdReport {
  double max_rel_err = 0;
  std::string worst_param;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
};

/// Compares the accumulated analytic gradients of `params` against central
/// finite differences of `loss_fn`. `loss_fn` must be a pure function of the
/// parameter values. Gradients must already be accumulated by the caller.
/// Entries where both sides sit below `tol_zero` (the FD noise floor) count
/// as matching; everything else is scored by relative error.
inline FdReport fd_check(const dcdm::ParamRefs<double>& params,
                         const std::function<double()>& loss_fn, double h = 1e-5,
                         std::size_t max_per_param = SIZE_MAX, double tol_zero = 1e-6) {
  FdReport rep;
  for (auto* p : params) {
    const std::size_t n = p->value.size();
    const std::size_t stride = n <= max_per_param ? 1 : n / max_per_param;
    for (std::size_t i = 0; i < n; i += stride) {
      const double orig = p->value[i];
      p->value[i] = orig + h;
      const double lp = loss_fn();
      p->value[i] = orig - h;
      const double lm = loss_fn();
      p->value[i] = orig;
      const double fd = (lp - lm) / (2.0 * h);
      const double an = p->grad[i];
      ++rep.checked;
      const double mag = std::max(std::abs(fd), std::abs(an));
      if (mag < tol_zero) continue;
      const double rel = std::abs(fd - an) / mag;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_param = p->name;
        rep.worst_index = i;
      }
    }
  }
  return rep;
}

}  // namespace dcdm::testing
