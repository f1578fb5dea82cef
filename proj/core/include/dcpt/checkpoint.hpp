#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dcpt/model.hpp"

namespace dcpt {

// Layout (all integers little-endian):
//   "DCPT" | u32 version = 1 | u64 config length | config JSON
//   then per tensor in visit order: u32 name length | name | u32 rank |
//   u64 dims[rank] | f32 values[numel]
// Batch-norm running statistics are stored alongside the parameters so that
// eval-mode outputs survive a round trip.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct CheckpointData {
  ModelConfig config;
  std::vector<CheckpointTensor> tensors;
};

template <typename T>
void save_checkpoint(Model<T>& model, const std::filesystem::path& path);

/// Throws CheckpointError with kind io, bad_magic, unsupported_version or truncated.
CheckpointData read_checkpoint(const std::filesystem::path& path);

/// Rebuilds the architecture from the stored config and fills its tensors.
template <typename T>
Model<T> load_checkpoint(const std::filesystem::path& path);

/// Fills an existing model; config_mismatch if the stored architecture
/// differs, parameter_mismatch if names or shapes disagree.
template <typename T>
void load_checkpoint_into(const std::filesystem::path& path, Model<T>& model);

}  // namespace dcpt
