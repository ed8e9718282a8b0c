// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tlc/common/types.hpp"
#include "tlc/nn/graph.hpp"

namespace tlc::nn {

inline constexpr int kContainerFormatVersion = 1;

struct NamedTensor {
  std::string name;
  Mat value;
};

/// On-disk model: `manifest.json` ({format_version, config, tensors: [{name,
/// shape, dtype: "f32le", offset, length}]}) plus `weights.bin`, the tensors as
/// little-endian float32 concatenated in manifest order. Offsets and lengths
/// are in bytes; shapes are [rows, cols].
struct Container {
  nlohmann::json config;
  std::vector<NamedTensor> tensors;

  const Mat& tensor(const std::string& name) const;
  bool has(const std::string& name) const;

  void save(const std::filesystem::path& dir) const;
  /// Throws LoadError on a missing file, malformed manifest or version mismatch.
  static Container load(const std::filesystem::path& dir);
};

/// Hex FNV-1a-64 over manifest.json followed by weights.bin.
std::string container_digest(const std::filesystem::path& dir);

/// Appends every parameter of `store` as a tensor named `prefix + name`.
void append_params(Container& c, const ParamStore& store, const std::string& prefix = "");
/// Copies same-named tensors into `store`; throws LoadError on missing or misshapen tensors.
void assign_params(ParamStore& store, const Container& c, const std::string& prefix = "");

}  // namespace tlc::nn
