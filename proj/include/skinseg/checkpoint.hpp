#pragma once

#include <filesystem>
#include <memory>

#include "skinseg/network.hpp"

namespace skinseg {

/// Single-file checkpoint: a text header (magic line "SKINSEG-CKPT-1", the
/// ModelConfig as key-value lines, a tensor directory) followed by the named
/// parameter arrays as little-endian float64 blobs, in directory order.
inline constexpr const char* kCheckpointMagic = "SKINSEG-CKPT-1";

void save_checkpoint(const std::filesystem::path& path, Model& model);

/// Rejects files whose magic line differs from kCheckpointMagic.
std::unique_ptr<Model> load_checkpoint(const std::filesystem::path& path);

}  // namespace skinseg
