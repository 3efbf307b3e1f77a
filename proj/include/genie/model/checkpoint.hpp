#pragma once

#include <filesystem>
#include <string>

#include "genie/model/genie_model.hpp"
#include "json.hpp"

namespace genie::model {

inline constexpr int kCheckpointVersion = 1;

// File layout: one line of JSON header, a newline, then the little-endian
// f32 parameter blob. The header carries the format version, the model
// config, a parameter manifest (name, shape, byte offset), the blob size, its
// CRC-32 and free-form metadata.
void save_checkpoint(const std::filesystem::path& path, GenieModel<float>& model,
                     const nlohmann::json& metadata = nlohmann::json::object());

struct LoadedCheckpoint {
  GenieModel<float> model;
  nlohmann::json metadata;
};

// Throws CheckpointError on any mismatch: version, manifest, size or checksum.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace genie::model
