#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "wproj/trainer.hpp"

namespace wproj {

inline constexpr char kCheckpointMagic[8] = {'W', 'P', 'R', 'J', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// A saved network. Parameters are always stored as 32-bit floats; with
/// `has_training_state` the file additionally carries the exact 64-bit
/// parameters, optimizer moments, clip bounds and step/epoch counters, and
/// loading restores those bit for bit so training can resume.
struct Checkpoint {
  TrainState state;
  bool has_training_state = false;
  std::uint64_t seed = 0;
  std::string config_text;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

/// Atomic write (temporary file + rename).
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace wproj
