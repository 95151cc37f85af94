#include "pugs/core/dictionary.hpp"

#include "pugs/core/error.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

namespace pugs {

using json = nlohmann::json;

std::string normalize_material_name(const std::string& name) {
  const auto first = name.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = name.find_last_not_of(" \t\r\n");
  std::string out = name.substr(first, last - first + 1);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

namespace {

PropertyValue value_from_json(const std::string& name, const json& v) {
  if (v.is_number()) return PropertyValue::point(v.get<double>());
  if (v.is_array() && v.size() == 2 && v[0].is_number() && v[1].is_number()) {
    return PropertyValue::range(v[0].get<double>(), v[1].get<double>());
  }
  if (v.is_array() && v.size() == 1 && v[0].is_number()) return PropertyValue::point(v[0].get<double>());
  throw ValidationError("material '" + name + "': value must be a number or [lo, hi]");
}

}  // namespace

MaterialDictionary material_dictionary_from_json(const json& doc) {
  if (!doc.is_object()) throw ParseError("material dictionary must be a JSON object");
  MaterialDictionary dict;
  dict.kind = property_kind_from_string(doc.value("property", std::string("density")));
  dict.unit = doc.value("unit", default_unit(dict.kind));
  dict.description = doc.value("description", std::string());
  if (!doc.contains("materials") || !doc["materials"].is_object()) {
    throw ValidationError("material dictionary: missing 'materials' object");
  }
  for (const auto& [raw_name, value] : doc["materials"].items()) {
    const std::string name = normalize_material_name(raw_name);
    dict.entries.push_back({name, value_from_json(name, value), std::nullopt});
  }
  std::stable_sort(dict.entries.begin(), dict.entries.end(),
                   [](const MaterialEntry& a, const MaterialEntry& b) { return a.name < b.name; });
  if (doc.contains("thickness_m")) {
    for (const auto& [raw_name, value] : doc["thickness_m"].items()) {
      const std::string name = normalize_material_name(raw_name);
      const auto it = std::find_if(dict.entries.begin(), dict.entries.end(),
                                   [&](const MaterialEntry& e) { return e.name == name; });
      if (it == dict.entries.end()) {
        throw ValidationError("thickness given for unknown material '" + name + "'");
      }
      it->thickness_m = value.get<double>();
    }
  }
  if (doc.contains("pure_volume_m3") && !doc["pure_volume_m3"].is_null()) {
    dict.pure_volume_m3 = doc["pure_volume_m3"].get<double>();
  }
  dict.validate();
  return dict;
}

json to_json(const MaterialDictionary& dict) {
  json doc;
  doc["property"] = to_string(dict.kind);
  doc["unit"] = dict.unit;
  if (!dict.description.empty()) doc["description"] = dict.description;
  // nlohmann objects keep keys sorted, so entry order is alphabetical on both load and save
  json materials = json::object();
  json thickness = json::object();
  for (const auto& e : dict.entries) {
    materials[e.name] = e.value.is_range() ? json::array({e.value.min(), e.value.max()}) : json(e.value.min());
    if (e.thickness_m) thickness[e.name] = *e.thickness_m;
  }
  doc["materials"] = materials;
  if (!thickness.empty()) doc["thickness_m"] = thickness;
  if (dict.pure_volume_m3) doc["pure_volume_m3"] = *dict.pure_volume_m3;
  return doc;
}

MaterialDictionary load_material_dictionary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingAssetError("missing material dictionary '" + path.string() + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("material dictionary '" + path.string() + "': " + e.what());
  }
  return material_dictionary_from_json(doc);
}

void save_material_dictionary(const std::filesystem::path& path, const MaterialDictionary& dict) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << to_json(dict).dump(2) << "\n";
}

}  // namespace pugs
