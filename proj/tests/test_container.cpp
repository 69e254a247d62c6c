// Copyright 2026 The DCDM Authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "dcdm/container.hpp"
#include "dcdm/errors.hpp"
#include "dcdm/image.hpp"
#include "dcdm/rng.hpp"

using namespace dcdm;
namespace fs = std::filesystem;

namespace {
fs::path tmpdir() {
  auto p = fs::temp_directory_path() / "dcdm_container_test";
  fs::create_directories(p);
  return p;
}
}  // namespace

TEST_CASE("round trip is bitwise for f32 and f64") {
  Rng rng(11);
  const auto dir = tmpdir();

  Tensor<float> a({3, 5, 2});
  rng.fill_gaussian(a);
  write_tensor_file(dir / "a.dcdm", a);
  const Tensor<float> a2 = read_tensor_file_f32(dir / "a.dcdm");
  CHECK(a == a2);

  Tensor<double> b({4, 7});
  rng.fill_gaussian(b);
  write_tensor_file(dir / "b.dcdm", b);
  const Tensor<double> b2 = read_tensor_file_f64(dir / "b.dcdm");
  CHECK(b == b2);

  CHECK(peek_dtype(dir / "a.dcdm") == Dtype::F32);
  CHECK(peek_dtype(dir / "b.dcdm") == Dtype::F64);
}

TEST_CASE("ImageBatch save/load round trip") {
  Rng rng(3);
  ImageBatch batch;
  batch.pixels = Tensor<float>({1, 64, 64, 2});
  rng.fill_uniform(batch.pixels, 0.0, 1.0);
  batch.drf = 4;
  const auto dir = tmpdir();
  save_tensor(batch, dir / "img.dcdm");
  const ImageBatch back = load_tensor(dir / "img.dcdm", DoseRole::LowDose, 4);
  CHECK(back.pixels == batch.pixels);
  CHECK(back.drf == 4);
}

TEST_CASE("wrong magic names the expected magic") {
  const auto dir = tmpdir();
  const auto path = dir / "bad_magic.dcdm";
  std::ofstream(path, std::ios::binary) << "NOPE" << std::string(16, '\0');
  CHECK_THROWS_WITH_AS(read_tensor_file_f32(path),
                       doctest::Contains("expected \"DCDM\""), FormatError);
}

TEST_CASE("truncated payload reports a byte offset") {
  const auto dir = tmpdir();
  Tensor<float> t({4, 4});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<float>(i);
  const auto path = dir / "trunc.dcdm";
  write_tensor_file(path, t);
  // Chop half the payload off.
  const auto full = fs::file_size(path);
  fs::resize_file(path, full - 2 * sizeof(float) * 4);
  try {
    read_tensor_file_f32(path);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
    CHECK(std::string(e.what()).find("payload short") != std::string::npos);
  }
}

TEST_CASE("declared dims longer than payload fail") {
  const auto dir = tmpdir();
  const auto path = dir / "shape_mismatch.dcdm";
  // Header says 4D 2x2x2x2 f32 but carries only 4 floats.
  std::ofstream out(path, std::ios::binary);
  out << "DCDM";
  const unsigned char meta[3] = {1, 0, 4};
  out.write(reinterpret_cast<const char*>(meta), 3);
  const std::uint32_t dims[4] = {2, 2, 2, 2};
  out.write(reinterpret_cast<const char*>(dims), sizeof dims);
  const float payload[4] = {0, 1, 2, 3};
  out.write(reinterpret_cast<const char*>(payload), sizeof payload);
  out.close();
  CHECK_THROWS_AS(read_tensor_file_f32(path), FormatError);
}

TEST_CASE("dtype mismatch is a format error") {
  const auto dir = tmpdir();
  Tensor<double> t({2, 2});
  write_tensor_file(dir / "f64.dcdm", t);
  CHECK_THROWS_AS(read_tensor_file_f32(dir / "f64.dcdm"), FormatError);
}

TEST_CASE("ImageBatch load rejects non-4D tensors") {
  const auto dir = tmpdir();
  Tensor<float> t({8, 8});
  write_tensor_file(dir / "2d.dcdm", t);
  CHECK_THROWS_AS(load_tensor(dir / "2d.dcdm"), FormatError);
}
