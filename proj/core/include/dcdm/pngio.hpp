// Copyright 2026 The DCDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>

#include "dcdm/tensor.hpp"

namespace dcdm {

/// 8-bit grayscale PNG of a 2D image; values mapped from [lo, hi].
void write_png_gray(const std::filesystem::path& path, const Tensor<float>& img, float lo = 0.0f,
                    float hi = 1.0f);

}  // namespace dcdm
