#pragma once

#include "pugs/core/types.hpp"
#include "pugs/net/transport.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace pugs::predict {

/// Version tag of the prompt templates; part of every cache key.
inline constexpr const char* kPromptVersion = "pugs-prompt-v1";

/// Material/property request asking for strict JSON with the kind's unit.
std::string build_property_prompt(PropertyKind kind, const std::string& image_ref = "the attached image");
std::string build_property_prompt(const std::string& kind_name, const std::string& image_ref = "the attached image");

/// Pure (solid, non-hollow) volume request.
std::string build_pure_volume_prompt(const std::string& image_ref = "the attached image");

inline constexpr const char* kRepairPrompt =
    "Your previous reply could not be parsed. Reply again with only the JSON object, no prose and no code fences.";

struct VlmConfig {
  std::string endpoint;
  std::string model = "gpt-4o";
  std::string api_key_env = "PUGS_VLM_API_KEY";
  double temperature = 0.0;
  double timeout_seconds = 120.0;
  /// Serve from the cache only; a miss is a TransportError.
  bool offline = false;

  nlohmann::json to_json() const;
};

/// Directory of JSON files keyed by a content hash. Concurrent readers, one writer at a time; writes go
/// through a temporary file and a rename.
class ResponseCache {
public:
  explicit ResponseCache(std::filesystem::path dir);

  std::optional<std::string> get(const std::string& key) const;
  void put(const std::string& key, const std::string& response, const nlohmann::json& info = {});
  const std::filesystem::path& dir() const { return dir_; }

private:
  std::filesystem::path dir_;
  mutable std::shared_mutex mutex_;
};

/// SHA-256 of "{version}\n{sha256(prompt)}\n{sha256(image)}".
std::string cache_key(const std::string& prompt, const std::string& image_bytes);

/// Throws ParseError (triggering one repair retry) when a reply is unusable.
using ResponseValidator = std::function<void(const std::string&)>;

/// Accepts any reply that parses as JSON after fence stripping.
void validate_json_reply(const std::string& reply);

/// Chat-completion request: one user message with the prompt and the PNG image as a base64 data URL.
nlohmann::json chat_request_body(const VlmConfig& config, const std::string& prompt, const std::string& image_png,
                                 const std::vector<std::pair<std::string, std::string>>& history = {});

/// Text of choices[0].message.content, or the body itself when it is not a chat-completion envelope.
std::string extract_reply(const std::string& body);

/// Cached, validated VLM call. Cache hits never touch the transport.
std::string query_vlm(const std::string& prompt, const std::string& image_png, const VlmConfig& config,
                      net::Transport* transport, ResponseCache* cache,
                      const ResponseValidator& validate = validate_json_reply);

/// Removes a surrounding ```json ... ``` fence and whitespace.
std::string strip_fences(const std::string& raw);

/// {"description"?, "materials": {name: value | [lo, hi]}} or a bare {name: value} object.
MaterialDictionary parse_material_response(const std::string& raw, PropertyKind kind);

/// "0.002 m^3", "2 L", "2 liters", {"pure_volume_m3": 0.002}: cubic meters.
double parse_pure_volume(const std::string& raw);

struct Prediction {
  MaterialDictionary dictionary;
  std::string view;
  std::uint64_t seed = 0;
  std::string raw;

  nlohmann::json metadata() const;
};

/// Index of the view handed to the VLM, drawn from a seeded generator.
std::size_t select_view(std::size_t view_count, std::uint64_t seed);

/// Reads the chosen view's image file (relative to `root`), queries the VLM for the dictionary and, when
/// `with_pure_volume`, the pure volume.
Prediction predict_properties(const std::vector<CameraView>& views, const std::filesystem::path& root,
                              PropertyKind kind, const VlmConfig& config, net::Transport* transport,
                              ResponseCache* cache, std::uint64_t seed, bool with_pure_volume = true);

double query_pure_volume(const std::string& image_png, const VlmConfig& config, net::Transport* transport,
                         ResponseCache* cache);

}  // namespace pugs::predict
