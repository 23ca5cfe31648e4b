#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace maxent {

/// Binary checkpoint layout, all integers little-endian:
///   "MXDW" | u32 version
///   u32 metadata count, then (u32 len, key bytes, u32 len, value bytes) per entry
///   u32 tensor count, then per tensor: u32 len, name bytes, u32 ndim, u64 dims..., f32 payload
struct Checkpoint {
  static constexpr char kMagic[4] = {'M', 'X', 'D', 'W'};
  static constexpr uint32_t kVersion = 1;

  std::map<std::string, std::string> metadata;
  std::vector<std::pair<std::string, torch::Tensor>> tensors;

  const torch::Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
/// Throws std::runtime_error on a bad magic, an unknown version or a truncated file.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace maxent
