// Copyright 2026 The DCDM Authors
// SPDX-License-Identifier: Apache-2.0

#include "dcdm/container.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "dcdm/errors.hpp"

namespace dcdm {
namespace {

void put_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

std::uint32_t get_u32_le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

template <class S>
std::vector<std::uint8_t> encode(const Tensor<S>& t) {
  static_assert(sizeof(float) == 4 && sizeof(double) == 8);
  std::vector<std::uint8_t> out;
  out.reserve(7 + 4 * t.ndim() + sizeof(S) * t.size());
  out.insert(out.end(), kContainerMagic, kContainerMagic + 4);
  out.push_back(kContainerVersion);
  out.push_back(static_cast<std::uint8_t>(dtype_of<S>()));
  if (t.ndim() > 255) throw FormatError("container: too many dimensions");
  out.push_back(static_cast<std::uint8_t>(t.ndim()));
  for (std::size_t d : t.shape()) {
    if (d > UINT32_MAX) throw FormatError("container: dimension exceeds u32");
    put_u32_le(out, static_cast<std::uint32_t>(d));
  }
  const std::size_t payload = sizeof(S) * t.size();
  const std::size_t base = out.size();
  out.resize(base + payload);
  // Little-endian host assumed; IEEE-754 bytes copied verbatim.
  std::memcpy(out.data() + base, t.data(), payload);
  return out;
}

[[noreturn]] void fail(const std::filesystem::path& path, std::size_t offset,
                       const std::string& what) {
  std::ostringstream os;
  os << "container " << path.string() << ": " << what << " (byte offset " << offset << ")";
  throw FormatError(os.str());
}

std::vector<std::uint8_t> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("container " + path.string() + ": cannot open");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

struct Header {
  Dtype dtype;
  std::vector<std::size_t> shape;
  std::size_t payload_offset;
};

Header parse_header(const std::filesystem::path& path, const std::vector<std::uint8_t>& b) {
  if (b.size() < 4 || std::memcmp(b.data(), kContainerMagic, 4) != 0)
    fail(path, 0, "bad magic, expected \"DCDM\"");
  if (b.size() < 5) fail(path, 4, "truncated header, missing version");
  if (b[4] != kContainerVersion)
    fail(path, 4, "unsupported version " + std::to_string(int(b[4])));
  if (b.size() < 6) fail(path, 5, "truncated header, missing dtype");
  if (b[5] > 1) fail(path, 5, "unknown dtype code " + std::to_string(int(b[5])));
  if (b.size() < 7) fail(path, 6, "truncated header, missing ndim");
  const std::size_t ndim = b[6];
  const std::size_t dims_end = 7 + 4 * ndim;
  if (b.size() < dims_end) fail(path, b.size(), "truncated header, incomplete dims");
  Header h;
  h.dtype = static_cast<Dtype>(b[5]);
  h.shape.resize(ndim);
  for (std::size_t i = 0; i < ndim; ++i) h.shape[i] = get_u32_le(b.data() + 7 + 4 * i);
  h.payload_offset = dims_end;
  return h;
}

template <class S>
Tensor<S> decode(const std::filesystem::path& path, const std::vector<std::uint8_t>& b) {
  const Header h = parse_header(path, b);
  if (h.dtype != dtype_of<S>())
    fail(path, 5,
         std::string("dtype mismatch, file holds ") + (h.dtype == Dtype::F32 ? "f32" : "f64"));
  Tensor<S> t(h.shape);
  const std::size_t want = sizeof(S) * t.size();
  const std::size_t have = b.size() - h.payload_offset;
  if (have < want)
    fail(path, b.size(),
         "payload short: header declares " + std::to_string(want) + " bytes, found " +
             std::to_string(have));
  if (have > want)
    fail(path, h.payload_offset + want,
         "payload long: header declares " + std::to_string(want) + " bytes, found " +
             std::to_string(have));
  std::memcpy(t.data(), b.data() + h.payload_offset, want);
  return t;
}

}  // namespace

std::vector<std::uint8_t> encode_tensor_f32(const Tensor<float>& t) { return encode(t); }
std::vector<std::uint8_t> encode_tensor_f64(const Tensor<double>& t) { return encode(t); }

namespace {
void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("container " + path.string() + ": cannot open for write");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("container " + path.string() + ": short write");
}
}  // namespace

void write_tensor_file(const std::filesystem::path& path, const Tensor<float>& t) {
  write_bytes(path, encode(t));
}
void write_tensor_file(const std::filesystem::path& path, const Tensor<double>& t) {
  write_bytes(path, encode(t));
}

Dtype peek_dtype(const std::filesystem::path& path) {
  return parse_header(path, read_all(path)).dtype;
}

Tensor<float> read_tensor_file_f32(const std::filesystem::path& path) {
  return decode<float>(path, read_all(path));
}
Tensor<double> read_tensor_file_f64(const std::filesystem::path& path) {
  return decode<double>(path, read_all(path));
}

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i) {
    s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    v >>= 4;
  }
  return s;
}

}  // namespace dcdm
