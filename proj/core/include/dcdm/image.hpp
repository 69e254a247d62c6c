// Copyright 2026 The DCDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string>

#include "dcdm/container.hpp"
#include "dcdm/errors.hpp"
#include "dcdm/tensor.hpp"

namespace dcdm {

enum class DoseRole { FullDose, LowDose };

/// drf == 0 means "unknown": routing has to pick a dose level.
inline constexpr int kUnknownDrf = 0;

/// Batch of normalized 2D intensity grids with dose metadata.
/// Pixel layout follows the container convention: shape (c, h, w, B).
struct ImageBatch {
  Tensor<float> pixels;
  int drf = kUnknownDrf;
  DoseRole role = DoseRole::FullDose;

  std::size_t channels() const { return pixels.dim(0); }
  std::size_t height() const { return pixels.dim(1); }
  std::size_t width() const { return pixels.dim(2); }
  std::size_t batch() const { return pixels.dim(3); }

  void validate() const {
    if (pixels.ndim() != 4) throw DomainError("ImageBatch: pixels must be 4D (c,h,w,B)");
    if (channels() < 1) throw DomainError("ImageBatch: channel count must be >= 1");
    if (height() % 64 != 0 || width() % 64 != 0)
      throw DomainError("ImageBatch: h and w must be divisible by 64 (six downsampling stages)");
    if (!pixels.all_finite()) throw DomainError("ImageBatch: non-finite pixel values");
  }

  /// Repack to (B, c, h, w) for network consumption.
  template <class S>
  Tensor<S> to_nchw() const {
    const std::size_t c = channels(), h = height(), w = width(), b = batch();
    Tensor<S> out({b, c, h, w});
    for (std::size_t ci = 0; ci < c; ++ci)
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
          for (std::size_t bi = 0; bi < b; ++bi)
            out[((bi * c + ci) * h + y) * w + x] =
                static_cast<S>(pixels[((ci * h + y) * w + x) * b + bi]);
    return out;
  }

  template <class S>
  static ImageBatch from_nchw(const Tensor<S>& t, int drf, DoseRole role) {
    const std::size_t b = t.dim(0), c = t.dim(1), h = t.dim(2), w = t.dim(3);
    ImageBatch out;
    out.pixels = Tensor<float>({c, h, w, b});
    out.drf = drf;
    out.role = role;
    for (std::size_t bi = 0; bi < b; ++bi)
      for (std::size_t ci = 0; ci < c; ++ci)
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x)
            out.pixels[((ci * h + y) * w + x) * b + bi] =
                static_cast<float>(t[((bi * c + ci) * h + y) * w + x]);
    return out;
  }

  /// Single-image 2D slice (h, w) of channel `c`, image `b`.
  Tensor<float> slice(std::size_t c, std::size_t b) const {
    const std::size_t h = height(), w = width();
    Tensor<float> out({h, w});
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x)
        out[y * w + x] = pixels[((c * h + y) * w + x) * batch() + b];
    return out;
  }
};

inline void save_tensor(const ImageBatch& batch, const std::filesystem::path& path) {
  write_tensor_file(path, batch.pixels);
}

inline ImageBatch load_tensor(const std::filesystem::path& path,
                              DoseRole role = DoseRole::FullDose, int drf = kUnknownDrf) {
  ImageBatch b;
  b.pixels = read_tensor_file_f32(path);
  if (b.pixels.ndim() != 4)
    throw FormatError("container " + path.string() + ": ImageBatch needs 4 dims, found " +
                      std::to_string(b.pixels.ndim()));
  b.role = role;
  b.drf = drf;
  return b;
}

}  // namespace dcdm
