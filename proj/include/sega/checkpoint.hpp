#pragma once

// Parameter checkpoint file:
//   magic "SEGACKPT", u32 format version, then per named tensor:
//   u16 name length, UTF-8 name, u8 rank, u32 dims, f32 little-endian data.
// Round-trips bit-exactly.

#include <map>
#include <string>
#include <vector>

#include "sega/tensor.hpp"

namespace sega {

constexpr uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::string& path, const std::vector<const Tensor*>& tensors);
std::map<std::string, Tensor> load_checkpoint(const std::string& path);

}  // namespace sega
