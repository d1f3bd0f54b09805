#pragma once

// Checkpoints: a JSON manifest (config, tensor table) next to a raw blob of
// little-endian float64 values.

#include "dnclab/dnc.hpp"
#include "dnclab/tasks.hpp"

#include <filesystem>
#include <string>

namespace dnclab {

struct Checkpoint {
  TaskKind task = TaskKind::Copy;
  DncConfig config;
  DncParams params;
  long iteration = 0;
};

/// Writes the blob `blob_name` beside `manifest`, then the manifest itself.
/// Both are written to temporaries and renamed into place.
void save_checkpoint(const std::filesystem::path& manifest, const Checkpoint& ckpt, const std::string& blob_name);

/// Throws ConfigError when the manifest is malformed or the tensor table does
/// not match the shapes implied by the stored config.
Checkpoint load_checkpoint(const std::filesystem::path& manifest);

}  // namespace dnclab
