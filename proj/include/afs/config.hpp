#pragma once

#include <string>

#include <json.hpp>

#include "afs/model.hpp"

namespace afs {

// A model spec plus the initialization seed, as stored on disk next to
// checkpoints. Unknown JSON keys are rejected.
struct ModelConfig {
    ModelSpec spec;
    std::uint64_t seed = 0;
};

nlohmann::json config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const nlohmann::json& j);

ModelConfig load_config(const std::string& path);
void save_config(const std::string& path, const ModelConfig& cfg);

// Named presets for the CLI: ast-ti / ast-s / ast-m (single frame, 2D stem),
// vast-ti / vast-s / vast-m (video, 3D stem), micro (toy scale).
ModelConfig preset_config(const std::string& name);

}  // namespace afs
