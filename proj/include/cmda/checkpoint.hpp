#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "cmda/baselines.hpp"
#include "cmda/multiview.hpp"

namespace cmda {

// "XMCK", version, model, preprocessing, training state.
inline constexpr std::uint32_t kCheckpointVersion = 1;

// What is needed to continue training bit-exactly: the global epoch counter
// (sampling seeds derive from it) and the optimizer's velocity buffers.
struct TrainingState {
  std::uint32_t epochsDone = 0;
  std::vector<std::vector<double>> velocities;
};

struct Checkpoint {
  MultiViewModel model;
  Preprocessing preprocessing;
  TrainingState state;
};

void saveCheckpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint loadCheckpoint(const std::filesystem::path& path);

std::vector<char> serializeCheckpoint(const Checkpoint& checkpoint);
Checkpoint deserializeCheckpoint(std::vector<char> bytes, std::string source);

}  // namespace cmda
