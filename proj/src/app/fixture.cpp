#include "pugs/app/fixture.hpp"

#include "pugs/app/config.hpp"
#include "pugs/app/stages.hpp"
#include "pugs/core/cameras.hpp"
#include "pugs/core/dictionary.hpp"
#include "pugs/core/error.hpp"
#include "pugs/core/image_io.hpp"
#include "pugs/core/ply.hpp"
#include "pugs/predict/vlm.hpp"
#include "pugs/propagate/embeddings.hpp"
#include "pugs/synth/scene.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace pugs::app {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kFixtureConfig = R"([features]
iterations = 300
pairs_per_iteration = 1024

[propagation]
patch_size = 33
voxel_fraction = 0.08

[vlm]
offline = true
)";

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingAssetError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

std::map<std::string, VecX> fulfill_requests(const json& requests, const fs::path& object_dir,
                                             const std::map<std::string, int>& material_region, int dim,
                                             double noise, std::uint64_t seed) {
  std::map<std::string, MaskMap> masks;
  std::map<std::string, VecX> out;
  auto basis = [dim](int id) {
    if (id < 0 || id >= dim) throw ValidationError("region id " + std::to_string(id) + " exceeds embedding dim");
    return VecX(VecX::Unit(dim, id));
  };
  for (const auto& p : requests.at("patches")) {
    const std::string view = p.at("view");
    if (!masks.count(view)) masks[view] = load_mask_png(object_dir / "masks" / (view + ".mask.png"));
    const MaskMap& mask = masks[view];
    const int cx = p.at("cx"), cy = p.at("cy");
    if (cx < 0 || cy < 0 || cx >= mask.width || cy >= mask.height) continue;
    const std::string key = p.at("key");
    std::mt19937_64 rng(propagation::fnv1a(key) ^ seed);
    std::normal_distribution<double> n(0.0, noise);
    VecX v = basis(mask.at(cx, cy));
    for (int d = 0; d < dim; ++d) v[d] += n(rng);
    out[key] = v.normalized();
  }
  for (const auto& t : requests.at("texts")) {
    const std::string material = t.at("material");
    const auto it = material_region.find(material);
    if (it == material_region.end()) continue;
    out[t.at("key").get<std::string>()] = basis(it->second);
  }
  return out;
}

FixtureInfo write_fixture(const fs::path& dir, const FixtureOptions& options) {
  synth::TwoClusterOptions so;
  so.image_width = options.image_width;
  so.image_height = options.image_height;
  so.focal = options.focal;
  so.seed = options.seed;
  auto scene = synth::two_cluster_scene(so);

  fs::create_directories(dir / "images");
  fs::create_directories(dir / "masks");
  save_gaussian_ply(dir / "point_cloud.ply", scene.cloud);
  GaussianCloud no_garl = scene.cloud;
  for (auto& g : no_garl.gaussians) {
    g.opacity_logit *= 0.5;
    g.log_scale.array() += std::log(1.2);
  }
  save_gaussian_ply(dir / "point_cloud_no_garl.ply", no_garl);
  for (auto& view : scene.views) {
    view.image_file = "images/" + view.name + ".png";
    save_png(dir / view.image_file, view.image);
    save_mask_png(dir / "masks" / (view.name + ".mask.png"), *view.mask);
  }
  save_transforms_json(dir / "cameras.json", scene.views);
  std::ofstream(dir / "pugs.toml", std::ios::trunc) << kFixtureConfig;

  // material per cluster; names sort so that dictionary index equals cluster label
  const std::string names[2] = {"oak", options.uniform_density ? "pine" : "steel"};
  const json values[2] = {json::array({600.0, 800.0}), options.uniform_density ? json(700.0) : json(7850.0)};
  const double density[2] = {700.0, options.uniform_density ? 700.0 : 7850.0};
  const double pure_volume = 2.0 * 4.0 / 3.0 * M_PI * std::pow(so.radius, 3);
  const double mass = 0.5 * pure_volume * (density[0] + density[1]);

  const Config config = parse_config_toml(kFixtureConfig, "fixture");
  json reply = {{"description", "two rounded parts side by side"},
                {"unit", "kg/m^3"},
                {"materials", {{names[0], values[0]}, {names[1], values[1]}}}};
  const std::string reply_text = reply.dump();
  const std::string volume_text = json{{"pure_volume_m3", pure_volume}}.dump();
  predict::ResponseCache cache(dir / config.vlm_cache);
  const auto property_prompt = predict::build_property_prompt(config.property.kind);
  for (const auto& view : scene.views) {
    const auto bytes = read_bytes(dir / view.image_file);
    cache.put(predict::cache_key(property_prompt, bytes), reply_text, {{"fixture", true}});
    cache.put(predict::cache_key(predict::build_pure_volume_prompt(), bytes), volume_text, {{"fixture", true}});
  }

  const auto dict = material_dictionary_from_json({{"property", "density"}, {"unit", "kg/m^3"}, {"materials",
                                                   reply["materials"]}});
  const auto views = load_views(dir, false, false);
  std::map<std::string, VecX> vectors;
  const std::map<std::string, int> region = {{names[0], 1}, {names[1], 2}};
  // plan on the stored float32 splats, as the pipeline will
  for (const char* splat : {"point_cloud.ply", "point_cloud_no_garl.ply"}) {
    const auto requests = plan_requests(load_gaussian_ply(dir / splat), views, dict, config.propagation);
    auto part = fulfill_requests(requests, dir, region, options.embedding_dim, options.embedding_noise, options.seed);
    vectors.insert(part.begin(), part.end());
  }
  propagation::write_embedding_archive(dir / "embeddings.json", vectors,
                                       {{"model", "synthetic-region-basis"}, {"seed", options.seed}});

  std::ofstream(dir / "ground_truth.json", std::ios::trunc) << json{{"mass_kg", mass}}.dump(2) << "\n";
  json info = {{"seed", options.seed},
               {"labels", scene.labels},
               {"materials", {names[0], names[1]}},
               {"densities", {density[0], density[1]}},
               {"pure_volume_m3", pure_volume},
               {"mass_kg", mass}};
  std::ofstream(dir / "fixture.json", std::ios::trunc) << info.dump(2) << "\n";

  FixtureInfo out;
  out.mass_kg = mass;
  out.pure_volume_m3 = pure_volume;
  for (const auto& [k, v] : vectors) (k.rfind("text:", 0) == 0 ? out.text_keys : out.patch_keys) += 1;
  return out;
}

}  // namespace pugs::app
