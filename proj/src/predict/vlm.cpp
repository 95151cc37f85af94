#include "pugs/predict/vlm.hpp"

#include "pugs/core/dictionary.hpp"
#include "pugs/core/error.hpp"

#include <cstdlib>
#include <fstream>
#include <mutex>
#include <random>
#include <regex>
#include <sstream>

namespace pugs::predict {

namespace {

std::string unit_phrase(PropertyKind kind) {
  switch (kind) {
    case PropertyKind::Density: return "density in kg/m^3";
    case PropertyKind::YoungsModulus: return "Young's modulus in GPa";
    case PropertyKind::Hardness: return "hardness on the Shore D scale";
    case PropertyKind::Friction: return "coefficient of kinetic friction (dimensionless)";
  }
  throw ValidationError("unsupported property kind");
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingAssetError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string image_mime(const std::string& bytes) {
  if (bytes.size() >= 3 && static_cast<unsigned char>(bytes[0]) == 0xFF &&
      static_cast<unsigned char>(bytes[1]) == 0xD8) {
    return "image/jpeg";
  }
  return "image/png";
}

}  // namespace

std::string build_property_prompt(PropertyKind kind, const std::string& image_ref) {
  const std::string unit = default_unit(kind);
  std::ostringstream p;
  p << "You are given " << image_ref << " of a single object.\n"
    << "1. Describe the object in one or two sentences.\n"
    << "2. List the materials that the visible parts of the object are made of.\n"
    << "3. For each material, give its " << unit_phrase(kind)
    << " as a single number or as a range [low, high].\n"
    << "Answer with only a JSON object of the form\n"
    << "{\"description\": \"...\", \"unit\": \"" << unit << "\", \"materials\": {\"<material name>\": <value or [low, high]>}}\n"
    << "All values must be expressed in " << unit << ".";
  return p.str();
}

std::string build_property_prompt(const std::string& kind_name, const std::string& image_ref) {
  PropertyKind kind;
  try {
    kind = property_kind_from_string(kind_name);
  } catch (const Error&) {
    throw ValidationError("unsupported property kind '" + kind_name + "'");
  }
  return build_property_prompt(kind, image_ref);
}

std::string build_pure_volume_prompt(const std::string& image_ref) {
  return "You are given " + image_ref +
         " of a single object. Estimate the volume actually occupied by its material, excluding hollow "
         "interior space. Answer with only a JSON object of the form {\"pure_volume_m3\": <number>} giving the "
         "volume in cubic meters.";
}

nlohmann::json VlmConfig::to_json() const {
  return {{"endpoint", endpoint}, {"model", model}, {"api_key_env", api_key_env},
          {"temperature", temperature}, {"offline", offline}, {"prompt_version", kPromptVersion}};
}

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::optional<std::string> ResponseCache::get(const std::string& key) const {
  std::shared_lock lock(mutex_);
  std::ifstream in(dir_ / (key + ".json"));
  if (!in) return std::nullopt;
  try {
    const auto doc = nlohmann::json::parse(in);
    return doc.at("response").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("corrupt cache entry '" + key + "': " + e.what());
  }
}

void ResponseCache::put(const std::string& key, const std::string& response, const nlohmann::json& info) {
  std::unique_lock lock(mutex_);
  std::filesystem::create_directories(dir_);
  nlohmann::json doc = info.is_object() ? info : nlohmann::json::object();
  doc["key"] = key;
  doc["response"] = response;
  const auto path = dir_ / (key + ".json");
  const auto tmp = dir_ / (key + ".json.tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot write cache entry '" + tmp.string() + "'");
    out << doc.dump(1) << "\n";
  }
  std::filesystem::rename(tmp, path);
}

std::string cache_key(const std::string& prompt, const std::string& image_bytes) {
  return net::sha256_hex(std::string(kPromptVersion) + "\n" + net::sha256_hex(prompt) + "\n" +
                         net::sha256_hex(image_bytes));
}

std::string strip_fences(const std::string& raw) {
  static const std::regex fence(R"(^\s*```[A-Za-z0-9_-]*\s*\n?([\s\S]*?)\n?\s*```\s*$)");
  std::smatch m;
  std::string body = std::regex_match(raw, m, fence) ? m[1].str() : raw;
  const auto first = body.find_first_not_of(" \t\r\n");
  const auto last = body.find_last_not_of(" \t\r\n");
  return first == std::string::npos ? std::string() : body.substr(first, last - first + 1);
}

void validate_json_reply(const std::string& reply) {
  try {
    const auto parsed = nlohmann::json::parse(strip_fences(reply));
    (void)parsed;
  } catch (const nlohmann::json::exception& e) {
    throw ResponseParseError(std::string("reply is not valid JSON: ") + e.what(), reply);
  }
}

nlohmann::json chat_request_body(const VlmConfig& config, const std::string& prompt, const std::string& image_png,
                                 const std::vector<std::pair<std::string, std::string>>& history) {
  const std::string url = "data:" + image_mime(image_png) + ";base64," + net::base64_encode(image_png);
  nlohmann::json messages = nlohmann::json::array();
  messages.push_back({{"role", "user"},
                      {"content", nlohmann::json::array({{{"type", "text"}, {"text", prompt}},
                                                         {{"type", "image_url"}, {"image_url", {{"url", url}}}}})}});
  for (const auto& [role, text] : history) messages.push_back({{"role", role}, {"content", text}});
  return {{"model", config.model}, {"temperature", config.temperature}, {"messages", messages}};
}

std::string extract_reply(const std::string& body) {
  try {
    const auto doc = nlohmann::json::parse(body);
    if (doc.is_object() && doc.contains("choices")) {
      return doc.at("choices").at(0).at("message").at("content").get<std::string>();
    }
  } catch (const nlohmann::json::exception&) {
  }
  return body;
}

std::string query_vlm(const std::string& prompt, const std::string& image_png, const VlmConfig& config,
                      net::Transport* transport, ResponseCache* cache, const ResponseValidator& validate) {
  const std::string key = cache_key(prompt, image_png);
  if (cache) {
    if (auto hit = cache->get(key)) return *hit;
  }
  if (config.offline) throw TransportError("offline mode: no cached VLM response for key " + key);
  if (!transport) throw TransportError("no VLM transport configured and no cached response for key " + key);
  if (config.endpoint.empty()) throw ConfigError("VLM endpoint is not configured");

  net::HttpRequest request;
  request.url = config.endpoint;
  request.timeout_seconds = config.timeout_seconds;
  if (const char* api_key = std::getenv(config.api_key_env.c_str()); api_key && *api_key) {
    request.headers.emplace_back("Authorization", std::string("Bearer ") + api_key);
  }

  std::vector<std::pair<std::string, std::string>> history;
  std::string reply;
  for (int attempt = 0; attempt < 2; ++attempt) {
    request.body = chat_request_body(config, prompt, image_png, history).dump();
    reply = extract_reply(transport->post(request).body);
    try {
      validate(reply);
      if (cache) {
        cache->put(key, reply, {{"prompt_sha256", net::sha256_hex(prompt)},
                                {"image_sha256", net::sha256_hex(image_png)},
                                {"prompt_version", kPromptVersion},
                                {"model", config.model}});
      }
      return reply;
    } catch (const ParseError&) {
      history = {{"assistant", reply}, {"user", kRepairPrompt}};
    }
  }
  throw ResponseParseError("VLM reply is still unparseable after a repair retry", reply);
}

MaterialDictionary parse_material_response(const std::string& raw, PropertyKind kind) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(strip_fences(raw));
  } catch (const nlohmann::json::exception& e) {
    throw ResponseParseError(std::string("material reply is not valid JSON: ") + e.what(), raw);
  }
  if (!doc.is_object()) throw ResponseParseError("material reply must be a JSON object", raw);
  nlohmann::json materials;
  std::string description;
  if (doc.contains("materials")) {
    materials = doc["materials"];
    description = doc.value("description", std::string());
  } else {
    materials = doc;
    materials.erase("description");
    materials.erase("unit");
  }
  if (!materials.is_object()) throw ResponseParseError("'materials' must be a JSON object", raw);
  if (materials.empty()) throw ValidationError("VLM returned an empty material dictionary");
  nlohmann::json normalized = {{"property", to_string(kind)},
                               {"unit", default_unit(kind)},
                               {"description", description},
                               {"materials", materials}};
  return material_dictionary_from_json(normalized);
}

double parse_pure_volume(const std::string& raw) {
  const std::string text = strip_fences(raw);
  double value = 0.0;
  bool parsed = false;
  try {
    const auto doc = nlohmann::json::parse(text);
    if (doc.is_number()) {
      value = doc.get<double>();
      parsed = true;
    } else if (doc.is_object() && doc.contains("pure_volume_m3") && doc["pure_volume_m3"].is_number()) {
      value = doc["pure_volume_m3"].get<double>();
      parsed = true;
    }
  } catch (const nlohmann::json::exception&) {
  }
  if (!parsed) {
    static const std::regex with_unit(
        R"(^\s*([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*(m\^?3|m³|cubic meters?|cubic metres?|l|liters?|litres?)\s*$)",
        std::regex::icase);
    std::smatch m;
    if (!std::regex_match(text, m, with_unit)) {
      throw ResponseParseError("cannot read a volume from '" + text + "'", raw);
    }
    value = std::stod(m[1].str());
    const char u = static_cast<char>(std::tolower(static_cast<unsigned char>(m[2].str()[0])));
    const bool cubic = u == 'm' || u == 'c';
    if (!cubic) value *= 1e-3;
  }
  if (!(value > 0.0) || !std::isfinite(value)) throw ValidationError("pure volume must be a positive number");
  return value;
}

nlohmann::json Prediction::metadata() const {
  return {{"view", view}, {"seed", seed}, {"prompt_version", kPromptVersion}};
}

std::size_t select_view(std::size_t view_count, std::uint64_t seed) {
  if (view_count == 0) throw ValidationError("no views to choose from");
  std::mt19937_64 rng(seed);
  return std::uniform_int_distribution<std::size_t>(0, view_count - 1)(rng);
}

double query_pure_volume(const std::string& image_png, const VlmConfig& config, net::Transport* transport,
                         ResponseCache* cache) {
  const auto validator = [](const std::string& reply) { (void)parse_pure_volume(reply); };
  return parse_pure_volume(query_vlm(build_pure_volume_prompt(), image_png, config, transport, cache, validator));
}

Prediction predict_properties(const std::vector<CameraView>& views, const std::filesystem::path& root,
                              PropertyKind kind, const VlmConfig& config, net::Transport* transport,
                              ResponseCache* cache, std::uint64_t seed, bool with_pure_volume) {
  Prediction out;
  out.seed = seed;
  const CameraView& view = views.at(select_view(views.size(), seed));
  out.view = view.name;
  const std::string image = read_file(root / view.image_file);
  const auto validator = [kind](const std::string& reply) { (void)parse_material_response(reply, kind); };
  out.raw = query_vlm(build_property_prompt(kind), image, config, transport, cache, validator);
  out.dictionary = parse_material_response(out.raw, kind);
  if (with_pure_volume) out.dictionary.pure_volume_m3 = query_pure_volume(image, config, transport, cache);
  return out;
}

}  // namespace pugs::predict
