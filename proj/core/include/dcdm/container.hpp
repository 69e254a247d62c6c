// Copyright 2026 The DCDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dcdm/tensor.hpp"

namespace dcdm {

// On-disk tensor container:
//   magic "DCDM" | version u8 | dtype u8 (0=f32, 1=f64) | ndim u8 |
//   ndim x u32 dims (LE) | row-major payload (LE)
inline constexpr char kContainerMagic[4] = {'D', 'C', 'D', 'M'};
inline constexpr std::uint8_t kContainerVersion = 1;

enum class Dtype : std::uint8_t { F32 = 0, F64 = 1 };

template <class S>
constexpr Dtype dtype_of();
template <>
constexpr Dtype dtype_of<float>() {
  return Dtype::F32;
}
template <>
constexpr Dtype dtype_of<double>() {
  return Dtype::F64;
}

std::vector<std::uint8_t> encode_tensor_f32(const Tensor<float>& t);
std::vector<std::uint8_t> encode_tensor_f64(const Tensor<double>& t);

void write_tensor_file(const std::filesystem::path& path, const Tensor<float>& t);
void write_tensor_file(const std::filesystem::path& path, const Tensor<double>& t);

/// Dtype actually stored in a container file (header peek).
Dtype peek_dtype(const std::filesystem::path& path);

/// Load a tensor stored with dtype matching S; throws FormatError otherwise.
Tensor<float> read_tensor_file_f32(const std::filesystem::path& path);
Tensor<double> read_tensor_file_f64(const std::filesystem::path& path);

template <class S>
Tensor<S> read_tensor_file(const std::filesystem::path& path);
template <>
inline Tensor<float> read_tensor_file<float>(const std::filesystem::path& p) {
  return read_tensor_file_f32(p);
}
template <>
inline Tensor<double> read_tensor_file<double>(const std::filesystem::path& p) {
  return read_tensor_file_f64(p);
}

template <class S>
inline void write_tensor_file_t(const std::filesystem::path& p, const Tensor<S>& t) {
  write_tensor_file(p, t);
}

/// FNV-1a 64-bit over a byte range; used for content hashes in manifests.
std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ull);

std::string hex64(std::uint64_t v);

}  // namespace dcdm
