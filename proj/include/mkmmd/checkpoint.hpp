#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "mkmmd/network.hpp"

namespace mkmmd {

/// Binary parameter checkpoint, little-endian:
///
///   magic    8 bytes   "MKMMDNET"
///   version  u32       1
///   layers   u32
///   per layer:
///     input_width u64, output_width u64, activation u8, trainability u8,
///     lr_multiplier f64, weight f64[out * in] row-major, bias f64[out]
///
/// Doubles are stored as their IEEE-754 bit patterns, so a save/load cycle
/// reproduces every parameter bit-exactly.
inline constexpr char kCheckpointMagic[8] = {'M', 'K', 'M', 'M', 'D', 'N', 'E', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_network(const Network& net);
Network deserialize_network(const std::string& bytes);

void save_checkpoint(const Network& net, const std::filesystem::path& path);
Network load_checkpoint(const std::filesystem::path& path);

}  // namespace mkmmd
