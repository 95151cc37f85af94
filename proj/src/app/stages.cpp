#include "pugs/app/stages.hpp"

#include "pugs/core/cameras.hpp"
#include "pugs/core/dictionary.hpp"
#include "pugs/core/error.hpp"
#include "pugs/core/image_io.hpp"
#include "pugs/core/ply.hpp"
#include "pugs/eval/segmentation.hpp"
#include "pugs/features/region_features.hpp"
#include "pugs/loss/losses.hpp"
#include "pugs/mass/volume.hpp"
#include "pugs/predict/vlm.hpp"
#include "pugs/propagate/embeddings.hpp"
#include "pugs/propagate/propagation.hpp"
#include "pugs/render/rasterizer.hpp"

#include <spdlog/spdlog.h>

#include <fstream>
#include <map>

namespace pugs::app {

namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

constexpr const char* kSoftware = "pugs 0.1.0";

fs::path require(const fs::path& path, const std::string& hint) {
  if (!fs::exists(path)) throw MissingAssetError("missing '" + path.string() + "'" + (hint.empty() ? "" : "; " + hint));
  return path;
}

std::shared_ptr<net::Transport> transport_for(const StageContext& ctx, const std::string& endpoint) {
  if (ctx.transport) return ctx.transport;
  if (endpoint.empty()) return nullptr;
  return std::make_shared<net::HttpTransport>();
}

double diagonal(const GaussianCloud& cloud) { return cloud.bounds().diagonal().norm(); }

struct SourceGeometry {
  double voxel_size = 0.0;
  double tau = 0.0;
  std::vector<propagation::SourcePoint> sources;
  std::vector<ImageF> depths;
};

SourceGeometry source_geometry(const GaussianCloud& cloud, const std::vector<CameraView>& views,
                               const propagation::PropagationConfig& config) {
  const double diag = diagonal(cloud);
  if (!(diag > 0.0)) throw DegenerateError("point cloud has zero extent");
  SourceGeometry g;
  g.voxel_size = config.voxel_fraction * diag;
  g.tau = config.depth_tolerance_fraction * diag;
  g.sources = propagation::sample_source_points(cloud, g.voxel_size);
  render::RasterizeOptions options;
  options.rgb = options.normal = false;
  for (const auto& view : views) {
    g.depths.push_back(propagation::surface_depth(render::render(cloud, view, options)));
  }
  return g;
}

MaterialDictionary load_stage_dictionary(const StageContext& ctx) {
  const auto path = require(ctx.out_dir / "dictionary.json", "run predict-properties first");
  return material_dictionary_from_json(read_json(path));
}

const PlyColumn& column(const std::vector<PlyColumn>& extras, const std::string& name, const fs::path& file) {
  for (const auto& c : extras)
    if (c.name == name) return c;
  throw ParseError("'" + file.string() + "' has no '" + name + "' column");
}

std::vector<double> as_double(const PlyColumn& c) { return c.values; }

std::vector<std::int32_t> as_int(const PlyColumn& c) {
  std::vector<std::int32_t> out;
  out.reserve(c.values.size());
  for (double v : c.values) out.push_back(static_cast<std::int32_t>(v));
  return out;
}

json material_counts(const MaterialDictionary& dict, const std::vector<std::int32_t>& ids) {
  std::vector<std::size_t> counts(dict.size(), 0);
  for (auto id : ids)
    if (id >= 0 && static_cast<std::size_t>(id) < counts.size()) ++counts[id];
  json out = json::object();
  for (std::size_t k = 0; k < dict.size(); ++k) out[dict.entries[k].name] = counts[k];
  return out;
}

}  // namespace

json stage_metadata(const StageContext& ctx, const std::string& stage, const Ablations& relevant) {
  json ablations = json::array();
  for (auto a : relevant)
    if (ctx.ablated(a)) ablations.push_back(to_string(a));
  return {{"stage", stage},
          {"software", kSoftware},
          {"seed", ctx.config.seed},
          {"config_hash", ctx.config.hash()},
          {"config", ctx.config.to_json()},
          {"ablations", ablations}};
}

fs::path splat_path(const StageContext& ctx) {
  if (ctx.ablated(Ablation::Garl)) {
    return require(ctx.object_dir / "point_cloud_no_garl.ply",
                   "the garl ablation needs a splat trained without the geometry terms");
  }
  return require(ctx.object_dir / "point_cloud.ply", "");
}

std::vector<CameraView> load_views(const fs::path& object_dir, bool with_images, bool with_masks) {
  std::vector<CameraView> views;
  if (fs::exists(object_dir / "cameras.json")) {
    views = load_cameras(object_dir / "cameras.json");
  } else if (fs::is_directory(object_dir / "sparse")) {
    views = load_cameras(object_dir / "sparse");
  } else {
    throw MissingAssetError("no cameras.json or sparse/ in '" + object_dir.string() + "'");
  }
  for (auto& view : views) {
    if (with_images) {
      const auto image = object_dir / view.image_file;
      if (fs::exists(image)) view.image = load_png_rgb(image);
      else if (fs::exists(object_dir / "images" / view.image_file)) view.image = load_png_rgb(object_dir / "images" / view.image_file);
    }
    if (with_masks) {
      const auto mask = object_dir / "masks" / (view.name + ".mask.png");
      if (fs::exists(mask)) view.mask = load_mask_map(mask, view);
    }
  }
  return views;
}

void write_json(const fs::path& path, const json& doc) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out << doc.dump(2) << "\n";
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingAssetError("cannot read '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError("'" + path.string() + "': " + e.what());
  }
}

json run_render(const StageContext& ctx) {
  const auto cloud = load_gaussian_ply(splat_path(ctx));
  const auto views = load_views(ctx.object_dir, true, false);
  const auto weights = ctx.ablated(Ablation::Garl) ? ctx.config.loss.without_garl() : ctx.config.loss;
  const auto dir = ctx.out_dir / "renders";
  fs::create_directories(dir);
  json per_view = json::array();
  for (const auto& view : views) {
    const auto buffers = render::render(cloud, view);
    save_png(dir / (view.name + "_rgb.png"), buffers.rgb);
    save_png(dir / (view.name + "_alpha.png"), buffers.alpha);
    ImageF normal = buffers.normal;
    for (auto& v : normal.data) v = 0.5 * v + 0.5;
    save_png(dir / (view.name + "_normal.png"), normal);
    save_pfm(dir / (view.name + "_depth.pfm"), buffers.depth);
    json entry = {{"view", view.name}, {"width", view.width}, {"height", view.height}};
    if (!view.image.empty()) {
      try {
        entry["loss"] = loss::total_loss(buffers, view, cloud, weights, ctx.config.edge_weight_mode).to_json();
      } catch (const DegenerateError& e) {
        entry["loss"] = nullptr;
        entry["loss_error"] = e.what();
      }
    }
    per_view.push_back(entry);
  }
  json doc = {{"gaussians", cloud.size()},
              {"views", per_view},
              {"loss_weights",
               {{"lambda_ssim", weights.lambda_ssim},
                {"lambda_geo", weights.lambda_geo},
                {"lambda_sparse", weights.lambda_sparse}}},
              {"metadata", stage_metadata(ctx, "render", {Ablation::Garl})}};
  write_json(ctx.out_dir / "render.json", doc);
  spdlog::info("render: {} views", views.size());
  return doc;
}

json run_train_features(const StageContext& ctx) {
  const auto cloud = load_gaussian_ply(splat_path(ctx));
  const auto views = load_views(ctx.object_dir, false, true);
  const auto result = features::train_features(cloud, views, ctx.config.features);
  fs::create_directories(ctx.out_dir);
  save_gaussian_ply(ctx.out_dir / "features.ply", result.cloud);
  {
    std::ofstream log(ctx.out_dir / "feature_loss.jsonl", std::ios::trunc);
    if (!log) throw IoError("cannot write feature_loss.jsonl");
    for (std::size_t i = 0; i < result.loss_history.size(); ++i) {
      log << json{{"iteration", i}, {"loss", result.loss_history[i]}}.dump() << "\n";
    }
  }
  std::size_t masked = 0;
  for (const auto& v : views) masked += v.mask.has_value();
  json doc = {{"gaussians", cloud.size()},
              {"feature_dim", result.cloud.feature_dim},
              {"masked_views", masked},
              {"iterations", result.loss_history.size()},
              {"final_loss", result.loss_history.empty() ? json(nullptr) : json(result.loss_history.back())},
              {"degenerate_batches", result.degenerate_batches},
              {"metadata", stage_metadata(ctx, "train-features", {Ablation::Garl})}};
  write_json(ctx.out_dir / "features.json", doc);
  spdlog::info("train-features: {} iterations on {} masked views", result.loss_history.size(), masked);
  return doc;
}

json run_predict_properties(const StageContext& ctx) {
  MaterialDictionary dict;
  json provenance;
  const auto file = ctx.object_dir / "dictionary.json";
  if (fs::exists(file)) {
    dict = load_material_dictionary(file);
    provenance = {{"source", "file"}};
  } else {
    const auto views = load_views(ctx.object_dir, false, false);
    auto transport = transport_for(ctx, ctx.config.vlm.endpoint);
    predict::ResponseCache cache(ctx.object_dir / ctx.config.vlm_cache);
    const auto prediction = predict::predict_properties(views, ctx.object_dir, ctx.config.property.kind,
                                                        ctx.config.vlm, transport.get(), &cache, ctx.config.seed);
    dict = prediction.dictionary;
    provenance = prediction.metadata();
    provenance["source"] = "vlm";
    provenance["model"] = ctx.config.vlm.model;
  }
  json doc = to_json(dict);
  doc["provenance"] = provenance;
  doc["metadata"] = stage_metadata(ctx, "predict-properties");
  write_json(ctx.out_dir / "dictionary.json", doc);
  spdlog::info("predict-properties: {} materials", dict.size());
  return doc;
}

json plan_requests(const GaussianCloud& cloud, const std::vector<CameraView>& views,
                   const MaterialDictionary& dictionary, const propagation::PropagationConfig& config) {
  const auto geometry = source_geometry(cloud, views, config);
  const auto patches =
      propagation::plan_patches(geometry.sources, views, geometry.depths, config.patch_size, geometry.tau);
  return propagation::requests_manifest(patches, views, dictionary, config.patch_size);
}

json run_emit_requests(const StageContext& ctx) {
  const auto cloud = load_gaussian_ply(require(ctx.out_dir / "features.ply", "run train-features first"));
  const auto views = load_views(ctx.object_dir, false, false);
  json doc = plan_requests(cloud, views, load_stage_dictionary(ctx), ctx.config.propagation);
  doc["metadata"] = stage_metadata(ctx, "emit-requests");
  write_json(ctx.out_dir / "embedding_requests.json", doc);
  spdlog::info("emit-requests: {} patches, {} texts", doc["patches"].size(), doc["texts"].size());
  return doc;
}

json run_propagate(const StageContext& ctx) {
  const auto features_ply = require(ctx.out_dir / "features.ply", "run train-features first");
  const auto cloud = load_gaussian_ply(features_ply);
  const auto views = load_views(ctx.object_dir, false, false);
  const auto dict = load_stage_dictionary(ctx);
  const auto& config = ctx.config.propagation;

  std::vector<std::shared_ptr<const propagation::EmbeddingProvider>> chain;
  const auto archive = ctx.object_dir / ctx.config.embeddings.archive;
  if (fs::exists(archive)) {
    chain.push_back(std::make_shared<propagation::EmbeddingArchive>(propagation::EmbeddingArchive::load(archive)));
  }
  if (!ctx.config.embeddings.endpoint.empty()) {
    chain.push_back(std::make_shared<propagation::HttpEmbeddingProvider>(
        transport_for(ctx, ctx.config.embeddings.endpoint), ctx.config.embeddings.endpoint));
  }
  if (chain.empty()) {
    throw MissingAssetError("no embedding archive at '" + archive.string() +
                            "' and no embedding endpoint; run propagate --emit-requests and fulfill the requests");
  }
  const propagation::ChainedEmbeddingProvider provider(chain);

  auto geometry = source_geometry(cloud, views, config);
  propagation::project_and_gather(geometry.sources, views, geometry.depths, config.patch_size, geometry.tau,
                                  provider);
  const auto values = dict.collapsed(ctx.config.property.collapse.value_or(default_collapse_rule(dict.kind)));
  std::vector<VecX> texts;
  for (const auto& e : dict.entries) texts.push_back(provider.get(propagation::text_key(e.name)));
  propagation::fuse_properties(geometry.sources, values, texts, config.temperature);

  const bool nearest = ctx.ablated(Ablation::Raft);
  const auto result = nearest ? propagation::propagate_nn_baseline(cloud, geometry.sources)
                              : propagation::propagate(cloud, geometry.sources);

  PlyColumn material{"material_id", {}, true}, value{"property_value", {}, false}, source{"source_index", {}, true};
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    material.values.push_back(result.material_id[i]);
    value.values.push_back(result.value[i]);
    source.values.push_back(result.source[i]);
  }
  fs::create_directories(ctx.out_dir);
  save_gaussian_ply(ctx.out_dir / "assignments.ply", cloud, {material, value, source});

  std::size_t visible = 0, fused = 0;
  json points = json::array();
  for (const auto& s : geometry.sources) {
    visible += s.visible();
    fused += s.fused();
    points.push_back({{"gaussian", s.gaussian_index},
                      {"views", s.views_seen},
                      {"material", s.fused() ? json(dict.entries[s.material_argmax].name) : json(nullptr)},
                      {"value", s.fused() ? json(s.property_value) : json(nullptr)}});
  }
  json materials = json::array();
  const json counts = material_counts(dict, result.material_id);
  for (std::size_t k = 0; k < dict.size(); ++k) {
    materials.push_back({{"name", dict.entries[k].name},
                         {"value", values[k]},
                         {"gaussians", counts[dict.entries[k].name]}});
  }
  json doc = {{"method", nearest ? "nearest_source" : "feature_similarity"},
              {"voxel_size", geometry.voxel_size},
              {"depth_tolerance", geometry.tau},
              {"gaussians", cloud.size()},
              {"sources", geometry.sources.size()},
              {"visible_sources", visible},
              {"fused_sources", fused},
              {"fallback_count", result.fallback_count},
              {"materials", materials},
              {"source_points", points},
              {"metadata", stage_metadata(ctx, "propagate", {Ablation::Raft})}};
  write_json(ctx.out_dir / "propagation.json", doc);
  spdlog::info("propagate: {} of {} sources fused, {} Gaussians assigned ({})", fused, geometry.sources.size(),
               cloud.size(), nearest ? "nearest source" : "feature similarity");
  return doc;
}

json run_integrate(const StageContext& ctx) {
  const auto path = require(ctx.out_dir / "assignments.ply", "run propagate first");
  std::vector<PlyColumn> extras;
  const auto cloud = load_gaussian_ply(path, &extras);
  const auto property = as_double(column(extras, "property_value", path));
  const auto ids = as_int(column(extras, "material_id", path));
  const auto dict = load_stage_dictionary(ctx);
  const auto& mc = ctx.config.mass;
  const MassMode mode = ctx.ablated(Ablation::Thickness) ? MassMode::Thickness : mc.mode;

  json doc = {{"property", pugs::to_string(dict.kind)}, {"unit", dict.unit}, {"mode", to_string(mode)}};
  if (mode == MassMode::Gaussian) {
    const auto r = mass::integrate_object(cloud, property, mc.k_sigma);
    double v = r.c;
    std::string v_source = "gaussian_volume";
    if (mc.pure_volume_m3 > 0.0) {
      v = mc.pure_volume_m3;
      v_source = "config";
    } else if (dict.pure_volume_m3) {
      v = *dict.pure_volume_m3;
      v_source = "dictionary";
    }
    doc["m_hat"] = r.m_hat;
    doc["c"] = r.c;
    doc["v"] = v;
    doc["v_source"] = v_source;
    doc["m"] = mass::pure_volume_correction(r.m_hat, r.c, v);
    doc["counts"] = {{"gaussians", cloud.size()}, {"materials", material_counts(dict, ids)}};
  } else {
    const double voxel = ctx.config.propagation.voxel_fraction * diagonal(cloud);
    const auto sources = propagation::sample_source_points(cloud, voxel);
    std::vector<double> rho, thickness;
    for (const auto& s : sources) {
      rho.push_back(property[s.gaussian_index]);
      const int id = ids[s.gaussian_index];
      const bool known = id >= 0 && static_cast<std::size_t>(id) < dict.size() && dict.entries[id].thickness_m;
      thickness.push_back(known ? *dict.entries[id].thickness_m : mc.default_thickness_m);
    }
    const auto r = mass::thickness_baseline(cloud, voxel, rho, thickness);
    double shell = 0.0;
    for (double t : thickness) shell += t;
    shell *= r.area / static_cast<double>(sources.size());
    doc["m_hat"] = r.m_hat;
    doc["c"] = shell;
    doc["v"] = nullptr;
    doc["v_source"] = nullptr;
    doc["m"] = r.m_hat;
    doc["surface_area"] = r.area;
    doc["voxel_size"] = voxel;
    doc["counts"] = {{"gaussians", cloud.size()},
                     {"occupied_voxels", r.occupied_voxels},
                     {"materials", material_counts(dict, ids)}};
  }
  doc["k_sigma"] = mc.k_sigma;
  doc["config_hash"] = ctx.config.hash();
  doc["metadata"] = stage_metadata(ctx, "integrate", {Ablation::Thickness});
  write_json(ctx.out_dir / "mass.json", doc);
  spdlog::info("integrate ({}): m = {}", to_string(mode), doc["m"].get<double>());
  return doc;
}

json run_segment(const StageContext& ctx) {
  const auto path = require(ctx.out_dir / "assignments.ply", "run propagate first");
  std::vector<PlyColumn> extras;
  const auto cloud = load_gaussian_ply(path, &extras);
  const auto ids = as_int(column(extras, "material_id", path));
  const auto views = load_views(ctx.object_dir, false, false);
  const auto dict = load_stage_dictionary(ctx);
  eval::material_segmentation_export(cloud, ids, views, ctx.out_dir / "segmentation");
  json legend = json::array();
  for (std::size_t k = 0; k < dict.size(); ++k) {
    const Vec3 c = eval::palette_color(static_cast<int>(k));
    legend.push_back({{"id", k},
                      {"name", dict.entries[k].name},
                      {"rgb", {std::lround(255 * c.x()), std::lround(255 * c.y()), std::lround(255 * c.z())}}});
  }
  json doc = {{"materials", legend},
              {"counts", material_counts(dict, ids)},
              {"metadata", stage_metadata(ctx, "segment")}};
  write_json(ctx.out_dir / "segmentation" / "segmentation.json", doc);
  spdlog::info("segment: {} views", views.size());
  return doc;
}

json run_pipeline(const StageContext& ctx) {
  run_render(ctx);
  run_train_features(ctx);
  run_predict_properties(ctx);
  run_propagate(ctx);
  const json mass = run_integrate(ctx);
  run_segment(ctx);
  if (fs::exists(ctx.object_dir / "ground_truth.json")) {
    const double y = eval::load_ground_truth(ctx.object_dir);
    const double m = mass.at("m").get<double>();
    eval::Report report;
    report.rows.push_back({ctx.object_dir.filename().string(), m, y, eval::metrics(m, y)});
    report.aggregate = eval::aggregate(report.rows);
    report.metadata = stage_metadata(ctx, "pipeline", {Ablation::Garl, Ablation::Raft, Ablation::Thickness});
    write_json(ctx.out_dir / "report.json", report.to_json());
    std::ofstream(ctx.out_dir / "report.csv", std::ios::trunc) << report.to_csv();
  }
  return mass;
}

eval::Report run_evaluate(const EvaluateOptions& options) {
  auto predict = [&](const fs::path& object_dir) {
    StageContext ctx;
    ctx.object_dir = object_dir;
    ctx.out_dir = options.out_root / object_dir.filename();
    ctx.config = resolve_config(options.config_path, object_dir);
    if (options.seed) {
      ctx.config.seed = *options.seed;
      ctx.config.features.seed = *options.seed;
    }
    ctx.ablations = options.ablations;
    ctx.transport = options.transport;
    spdlog::info("evaluate: {}", object_dir.filename().string());
    return run_pipeline(ctx).at("m").get<double>();
  };
  auto report = eval::evaluate_dataset(options.dataset_root, predict, options.subset);
  json ablations = json::array();
  for (auto a : options.ablations) ablations.push_back(to_string(a));
  report.metadata = {{"software", kSoftware}, {"dataset", options.dataset_root.filename().string()},
                     {"ablations", ablations}};
  if (options.seed) report.metadata["seed"] = *options.seed;
  fs::create_directories(options.out_root);
  write_json(options.out_root / "report.json", report.to_json(options.paper_reference));
  std::ofstream csv(options.out_root / "report.csv", std::ios::trunc);
  if (!csv) throw IoError("cannot write report.csv");
  csv << report.to_csv(options.paper_reference);
  return report;
}

}  // namespace pugs::app
