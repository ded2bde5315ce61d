#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "genhead/tensor.hpp"

namespace genhead {

// Checkpoint layout:
//   bytes 0..7    magic "GHCKPT01"
//   bytes 8..15   header length L, uint64 little-endian
//   next L bytes  JSON header {"tensors":[{"name","shape","offset","count"},...]}
//   remainder     tensor values as little-endian IEEE-754 doubles; `offset`
//                 is the byte offset of each tensor from the start of this block
struct NamedTensor {
  std::string name;
  Tensor value;
};

void save_checkpoint(const std::filesystem::path& path, std::span<const Parameter* const> params);
std::vector<NamedTensor> read_checkpoint(const std::filesystem::path& path);
// Copies matching tensors (by name) into params; throws if one is missing or
// its shape differs.
void load_checkpoint(const std::filesystem::path& path, std::span<Parameter* const> params);

}  // namespace genhead
