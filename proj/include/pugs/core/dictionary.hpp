#pragma once

#include "pugs/core/types.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>

namespace pugs {

/// Parses {"property", "unit", "materials": {name: value | [lo, hi]}, "pure_volume_m3"?,
/// "thickness_m"?: {name: value}, "description"?}. Names are lower-cased and trimmed.
MaterialDictionary material_dictionary_from_json(const nlohmann::json& doc);
nlohmann::json to_json(const MaterialDictionary& dict);

MaterialDictionary load_material_dictionary(const std::filesystem::path& path);
void save_material_dictionary(const std::filesystem::path& path, const MaterialDictionary& dict);

/// Lower-case + trim, the canonical form of a material key.
std::string normalize_material_name(const std::string& name);

}  // namespace pugs
