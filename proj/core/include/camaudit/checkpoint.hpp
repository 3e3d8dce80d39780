#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "camaudit/network.hpp"

namespace camaudit {

inline constexpr std::string_view kCheckpointMagic = "CAMAUDIT-CHECKPOINT-1\n";

nlohmann::json spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const nlohmann::json& j);

/// Magic line, the spec as one line of canonical JSON, then every
/// parameter as a little-endian IEEE-754 double in declaration order.
std::string serialize_checkpoint(const Model& model);
Model deserialize_checkpoint(std::string_view bytes);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace camaudit
