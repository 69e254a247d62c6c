// Copyright 2026 The DCDM Authors
// SPDX-License-Identifier: Apache-2.0

#include "dcdm/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "dcdm/errors.hpp"

namespace dcdm {
namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

void write_manifest(const std::filesystem::path& file, const Manifest& m) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw FormatError("manifest " + file.string() + ": cannot open for write");
  out << "dcdm-checkpoint v1\n";
  out << "kind: " << m.kind << "\n";
  for (const auto& [k, v] : m.extra) out << "meta " << k << ": " << v << "\n";
  for (const auto& t : m.tensors) {
    out << "tensor: " << t.name << " dims=";
    for (std::size_t i = 0; i < t.dims.size(); ++i) out << (i ? "," : "") << t.dims[i];
    out << " dtype=" << t.dtype << " frozen=" << (t.frozen ? 1 : 0) << " hash=" << t.hash << "\n";
  }
  out << "content_hash: " << m.content_hash << "\n";
}

Manifest read_manifest(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw FormatError("manifest " + file.string() + ": cannot open");
  Manifest m;
  std::string line;
  if (!std::getline(in, line) || line != "dcdm-checkpoint v1")
    throw FormatError("manifest " + file.string() + ": bad header line");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line.rfind("kind: ", 0) == 0) {
      m.kind = line.substr(6);
    } else if (line.rfind("meta ", 0) == 0) {
      const auto pos = line.find(": ");
      if (pos == std::string::npos)
        throw FormatError("manifest " + file.string() + ": malformed meta line");
      m.extra[line.substr(5, pos - 5)] = line.substr(pos + 2);
    } else if (line.rfind("tensor: ", 0) == 0) {
      ManifestTensor t;
      std::istringstream is(line.substr(8));
      std::string field;
      is >> t.name;
      while (is >> field) {
        if (field.rfind("dims=", 0) == 0) {
          for (const auto& d : split(field.substr(5), ','))
            if (!d.empty()) t.dims.push_back(static_cast<std::size_t>(std::stoull(d)));
        } else if (field.rfind("dtype=", 0) == 0) {
          t.dtype = field.substr(6);
        } else if (field.rfind("frozen=", 0) == 0) {
          t.frozen = field.substr(7) == "1";
        } else if (field.rfind("hash=", 0) == 0) {
          t.hash = field.substr(5);
        }
      }
      if (t.name.empty() || t.hash.empty())
        throw FormatError("manifest " + file.string() + ": malformed tensor line");
      m.tensors.push_back(std::move(t));
    } else if (line.rfind("content_hash: ", 0) == 0) {
      m.content_hash = line.substr(14);
    } else {
      throw FormatError("manifest " + file.string() + ": unrecognized line '" + line + "'");
    }
  }
  if (m.content_hash.empty())
    throw FormatError("manifest " + file.string() + ": missing content hash");
  return m;
}

}  // namespace dcdm
