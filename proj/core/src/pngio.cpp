// Copyright 2026 The DCDM Authors
// SPDX-License-Identifier: Apache-2.0

#include "dcdm/pngio.hpp"

#include <zlib.h>

#include <algorithm>
#include <cstring>
#include <fstream>

#include "dcdm/errors.hpp"

namespace dcdm {
namespace {

void put_u32_be(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
}

void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
               const std::vector<std::uint8_t>& data) {
  put_u32_be(out, static_cast<std::uint32_t>(data.size()));
  const std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), data.begin(), data.end());
  const auto crc =
      crc32(0, out.data() + crc_start, static_cast<uInt>(out.size() - crc_start));
  put_u32_be(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

void write_png_gray(const std::filesystem::path& path, const Tensor<float>& img, float lo,
                    float hi) {
  if (img.ndim() != 2) throw DomainError("write_png_gray: expects a 2D image");
  const std::size_t h = img.dim(0), w = img.dim(1);
  const float span = hi > lo ? hi - lo : 1.0f;

  // Raw scanlines: filter byte 0 + row of 8-bit samples.
  std::vector<std::uint8_t> raw;
  raw.reserve(h * (w + 1));
  for (std::size_t y = 0; y < h; ++y) {
    raw.push_back(0);
    for (std::size_t x = 0; x < w; ++x) {
      const float v = std::clamp((img[y * w + x] - lo) / span, 0.0f, 1.0f);
      raw.push_back(static_cast<std::uint8_t>(v * 255.0f + 0.5f));
    }
  }
  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> compressed(bound);
  if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 9) != Z_OK)
    throw NumericError("write_png_gray: deflate failed");
  compressed.resize(bound);

  std::vector<std::uint8_t> png = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  std::vector<std::uint8_t> ihdr;
  put_u32_be(ihdr, static_cast<std::uint32_t>(w));
  put_u32_be(ihdr, static_cast<std::uint32_t>(h));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(0);  // grayscale
  ihdr.push_back(0);  // deflate
  ihdr.push_back(0);  // filter
  ihdr.push_back(0);  // no interlace
  put_chunk(png, "IHDR", ihdr);
  put_chunk(png, "IDAT", compressed);
  put_chunk(png, "IEND", {});

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("png " + path.string() + ": cannot open for write");
  out.write(reinterpret_cast<const char*>(png.data()), static_cast<std::streamsize>(png.size()));
}

}  // namespace dcdm
