#pragma once

// Single-file checkpoint container.
//
// Layout (all integers little-endian):
//   "RTGTCKPT"                 8-byte magic
//   u32 format_version
//   u64 meta length, meta      JSON: config, iteration, rng_state, extra
//   u32 tensor count
//   per tensor:
//     u32 name length, name
//     u8  dtype                0 = float32, 1 = int64
//     u32 ndim, i64 dims[ndim]
//     payload                  little-endian elements, row-major
//   u32 CRC-32 of every preceding byte
//
// Files are written to "<path>.tmp" and renamed into place.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>
#include <torch/torch.h>

#include "config.hpp"

namespace retarget {

struct NamedTensor {
  std::string name;
  torch::Tensor value;
};

struct Checkpoint {
  static constexpr uint32_t kFormatVersion = 1;

  uint32_t format_version = kFormatVersion;
  ModelConfig config;
  int64_t iteration = 0;
  std::string rng_state;
  nlohmann::json extra = nlohmann::json::object();
  std::vector<NamedTensor> tensors;

  const torch::Tensor* find(std::string_view name) const;
  /// Throws InvalidArgument when `name` is absent.
  const torch::Tensor& require(std::string_view name) const;
  /// All tensors whose name starts with `prefix`, prefix stripped.
  std::vector<NamedTensor> with_prefix(std::string_view prefix) const;
};

std::string encode_checkpoint(const Checkpoint& checkpoint);
/// Throws ChecksumError on a bad magic, truncation or CRC mismatch.
Checkpoint decode_checkpoint(std::string_view bytes);

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Writes `bytes` to `path` through a temporary file and rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

}  // namespace retarget
