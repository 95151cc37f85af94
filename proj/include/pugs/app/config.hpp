#pragma once

#include "pugs/core/types.hpp"
#include "pugs/features/region_features.hpp"
#include "pugs/loss/losses.hpp"
#include "pugs/predict/vlm.hpp"
#include "pugs/propagate/propagation.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <set>
#include <string>

namespace pugs::app {

enum class MassMode { Gaussian, Thickness };

std::string to_string(MassMode mode);
MassMode mass_mode_from_string(const std::string& s);

struct MassConfig {
  double k_sigma = 1.0;
  MassMode mode = MassMode::Gaussian;
  /// Shell thickness for materials without a dictionary thickness (thickness mode only).
  double default_thickness_m = 0.005;
  /// Overrides the dictionary pure volume when positive.
  double pure_volume_m3 = 0.0;
};

struct PropertyConfig {
  PropertyKind kind = PropertyKind::Density;
  /// Empty selects the default rule of the property kind.
  std::optional<CollapseRule> collapse;
};

struct EmbeddingConfig {
  /// Archive manifest relative to the object directory.
  std::string archive = "embeddings.json";
  /// Optional embedding service queried for keys missing from the archive.
  std::string endpoint;
};

struct Config {
  std::uint64_t seed = 0;
  loss::LossWeights loss;
  loss::EdgeWeightMode edge_weight_mode = loss::EdgeWeightMode::AsPrinted;
  features::TrainerConfig features;
  propagation::PropagationConfig propagation;
  MassConfig mass;
  PropertyConfig property;
  predict::VlmConfig vlm;
  std::string vlm_cache = "vlm_cache";
  EmbeddingConfig embeddings;

  void validate() const;
  nlohmann::json to_json() const;
  /// SHA-256 of the canonical JSON form.
  std::string hash() const;
};

/// Every key with its default value, as TOML.
std::string default_config_toml();
Config parse_config_toml(const std::string& text, const std::string& source = "config");
Config load_config(const std::filesystem::path& path);

/// --config when given, else `pugs.toml` in the object directory, else defaults.
Config resolve_config(const std::optional<std::filesystem::path>& explicit_path, const std::filesystem::path& object_dir);

enum class Ablation { Garl, Raft, Thickness };

std::string to_string(Ablation a);
Ablation ablation_from_string(const std::string& s);
using Ablations = std::set<Ablation>;

}  // namespace pugs::app
