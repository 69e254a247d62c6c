// Copyright 2026 The DCDM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "dcdm/container.hpp"
#include "dcdm/nn/param.hpp"

namespace dcdm {

struct ManifestTensor {
  std::string name;
  std::vector<std::size_t> dims;
  std::string dtype;
  bool frozen = false;
  std::string hash;
};

struct Manifest {
  std::string kind;
  std::map<std::string, std::string> extra;
  std::vector<ManifestTensor> tensors;
  std::string content_hash;
};

Manifest read_manifest(const std::filesystem::path& file);
void write_manifest(const std::filesystem::path& file, const Manifest& m);

template <class S>
std::string tensor_hash(const Tensor<S>& t) {
  return hex64(fnv1a64(t.data(), sizeof(S) * t.size()));
}

/// Checkpoint = directory of per-parameter container files + manifest.txt.
template <class S>
void save_checkpoint(const std::filesystem::path& dir, const std::string& kind,
                     const ParamRefs<S>& params,
                     const std::map<std::string, std::string>& extra = {}) {
  std::filesystem::create_directories(dir);
  Manifest m;
  m.kind = kind;
  m.extra = extra;
  for (const auto* p : params) {
    write_tensor_file(dir / (p->name + ".dcdm"), p->value);
    ManifestTensor mt;
    mt.name = p->name;
    mt.dims = p->value.shape();
    mt.dtype = dtype_of<S>() == Dtype::F32 ? "f32" : "f64";
    mt.frozen = p->frozen;
    mt.hash = tensor_hash(p->value);
    m.tensors.push_back(std::move(mt));
  }
  m.content_hash = hex64(params_hash(params));
  write_manifest(dir / "manifest.txt", m);
}

/// Loads a checkpoint into an existing model's parameters, validating names,
/// shapes and per-tensor hashes. Returns the manifest for its extra fields.
template <class S>
Manifest load_checkpoint(const std::filesystem::path& dir, const ParamRefs<S>& params) {
  const Manifest m = read_manifest(dir / "manifest.txt");
  std::map<std::string, const ManifestTensor*> index;
  for (const auto& mt : m.tensors) index[mt.name] = &mt;
  for (auto* p : params) {
    auto it = index.find(p->name);
    if (it == index.end())
      throw FormatError("checkpoint " + dir.string() + ": missing tensor '" + p->name + "'");
    Tensor<S> t = read_tensor_file<S>(dir / (p->name + ".dcdm"));
    if (t.shape() != p->value.shape())
      throw FormatError("checkpoint " + dir.string() + ": tensor '" + p->name +
                        "' has mismatched shape");
    if (tensor_hash(t) != it->second->hash)
      throw FormatError("checkpoint " + dir.string() + ": tensor '" + p->name +
                        "' fails its manifest hash");
    p->value = std::move(t);
  }
  if (hex64(params_hash(params)) != m.content_hash)
    throw FormatError("checkpoint " + dir.string() + ": content hash mismatch");
  return m;
}

}  // namespace dcdm
