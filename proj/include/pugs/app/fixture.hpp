#pragma once

#include "pugs/core/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace pugs::app {

struct FixtureOptions {
  std::uint64_t seed = 7;
  /// Both clusters get the same density.
  bool uniform_density = false;
  int image_width = 96;
  int image_height = 72;
  double focal = 80.0;
  int embedding_dim = 16;
  /// Per-component noise added to patch embeddings before normalization.
  double embedding_noise = 0.05;
};

struct FixtureInfo {
  double mass_kg = 0.0;
  double pure_volume_m3 = 0.0;
  std::size_t patch_keys = 0;
  std::size_t text_keys = 0;
};

/// Synthetic two-cluster object directory: splats (with and without GARL), cameras, images, masks, a VLM
/// response cache, a fulfilled embedding archive, ground truth, fixture.json and a pugs.toml sized for it.
FixtureInfo write_fixture(const std::filesystem::path& dir, const FixtureOptions& options = {});

/// Stand-in for the embedding exporter: each patch maps to the basis vector of the mask id under its center
/// plus seeded noise; each text key maps to the basis vector of its material's region id.
std::map<std::string, VecX> fulfill_requests(const nlohmann::json& requests, const std::filesystem::path& object_dir,
                                             const std::map<std::string, int>& material_region, int dim,
                                             double noise, std::uint64_t seed);

}  // namespace pugs::app
