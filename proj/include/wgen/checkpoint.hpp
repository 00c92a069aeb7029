#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "wgen/model.hpp"

namespace wgen {

inline constexpr char kCheckpointMagic[5] = {'W', 'G', 'E', 'N', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  Parameters<float> params;
};

// Layout, all integers little-endian:
//   "WGEN1" | u32 version | u32 len, config text | per array:
//   u32 len, name | u32 rank | rank × u32 dim | f32 payload
std::string serialize_checkpoint(const ModelConfig& config, const Parameters<float>& params);
Checkpoint parse_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const Parameters<float>& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace wgen
