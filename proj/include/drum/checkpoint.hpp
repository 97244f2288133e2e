#pragma once

// Model checkpoint, little-endian:
//   "DRUMCKPT"            8-byte magic
//   u32 version           (1)
//   u32 in_channels
//   u32 level_count, u32 widths[level_count]
//   u32 embed_dim, u32 hidden_dim
//   u64 training step counter
//   u64 parameter count
//   f32 weights           every array of DenoiserNetwork::blocks(), in order

#include <cstdint>
#include <filesystem>

#include "drum/denoiser.hpp"

namespace drum {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  DenoiserNetwork network;
  std::uint64_t step = 0;
};

void save_checkpoint(const std::filesystem::path& path, const DenoiserNetwork& net, std::uint64_t step);

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace drum
