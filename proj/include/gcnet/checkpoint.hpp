#pragma once

// Binary checkpoints: "GCN1", u32 version, the model configuration, then
// every named tensor as (u32 name length, name, u32 rank, u32 extents,
// little-endian float32 data). All integers are little-endian.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "gcnet/model.hpp"

namespace gcnet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const ModelParams<float>& params);

/// Throws FormatError on bad magic, version, truncation, or a tensor that the
/// stored configuration does not define.
ModelParams<float> decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const ModelParams<float>& params, const std::filesystem::path& path);
ModelParams<float> load_checkpoint(const std::filesystem::path& path);

}  // namespace gcnet
