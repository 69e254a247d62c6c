// Copyright 2026 The DCDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dcdm/denoiser.hpp"
#include "dcdm/ntc.hpp"
#include "dcdm/phantom.hpp"

namespace dcdm {

/// Reproducible-run configuration. Every field has a desk-scale default; the
/// serialized form is a sectioned key/value text file that round-trips
/// losslessly and hashes independently of key order.
struct RunConfig {
  // [data]
  std::size_t height = 64;
  std::size_t width = 64;
  std::size_t n_structures = 6;
  std::size_t n_train = 48;
  std::size_t n_eval = 32;
  DoseConfig dose;

  // [schedule]
  int T = 200;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  // [model]
  UNetConfig unet{.in_channels = 1, .stem_channels = 16, .max_channels = 64};
  NtcConfig ntc{};

  // [train]
  int steps = 2000;
  int batch = 6;
  double lr = 1e-4;
  std::uint64_t seed = 1;

  NoiseSchedule schedule() const { return make_schedule(T, beta_start, beta_end); }

  /// Restores the full-paper parameterization (image size, T, channel plan,
  /// iteration counts).
  void apply_paper_scale() {
    height = 256;
    width = 256;
    T = 1000;
    unet.stem_channels = 32;
    unet.max_channels = 256;
    steps = 100000;
    batch = 6;
  }

  void validate() const;

  std::string serialize() const;                  // canonical (sorted) form
  static RunConfig parse_text(const std::string&);
  static RunConfig load(const std::filesystem::path&);
  void save(const std::filesystem::path&) const;

  /// FNV hash of the canonical serialization.
  std::string hash() const;
};

}  // namespace dcdm
