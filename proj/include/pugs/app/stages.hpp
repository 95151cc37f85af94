#pragma once

#include "pugs/app/config.hpp"
#include "pugs/core/types.hpp"
#include "pugs/eval/metrics.hpp"
#include "pugs/net/transport.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace pugs::app {

/// Object directory layout:
///   point_cloud.ply            splat (point_cloud_no_garl.ply for the garl ablation)
///   cameras.json | sparse/     transforms JSON or COLMAP text model
///   images/                    RGB views as referenced by the cameras
///   masks/{view}.mask.png      16-bit region ids (0 = background)
///   embeddings.json + .bin     embedding archive
///   dictionary.json            material dictionary; otherwise predicted through the VLM cache
///   ground_truth.json          {"mass_kg": number}
///   pugs.toml                  optional per-object config
struct StageContext {
  std::filesystem::path object_dir;
  std::filesystem::path out_dir;
  Config config;
  Ablations ablations;
  /// Overrides the HTTP transport built from the config (VLM and embedding services).
  std::shared_ptr<net::Transport> transport;

  bool ablated(Ablation a) const { return ablations.count(a) > 0; }
};

/// Config echo and hash, plus the ablations that alter this stage.
nlohmann::json stage_metadata(const StageContext& ctx, const std::string& stage, const Ablations& relevant = {});

std::filesystem::path splat_path(const StageContext& ctx);
std::vector<CameraView> load_views(const std::filesystem::path& object_dir, bool with_images, bool with_masks);

/// Pretty-printed JSON written through a temporary file.
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json(const std::filesystem::path& path);

/// renders/{view}_{rgb,alpha,normal}.png and {view}_depth.pfm, render.json with per-view losses.
nlohmann::json run_render(const StageContext& ctx);
/// features.ply, feature_loss.jsonl, features.json.
nlohmann::json run_train_features(const StageContext& ctx);
/// dictionary.json from the object's dictionary or the VLM (cache first).
nlohmann::json run_predict_properties(const StageContext& ctx);
/// Requests manifest for the embedding exporter: embedding_requests.json.
nlohmann::json run_emit_requests(const StageContext& ctx);
/// assignments.ply (material_id, property_value, source_index columns) and propagation.json.
nlohmann::json run_propagate(const StageContext& ctx);
/// mass.json.
nlohmann::json run_integrate(const StageContext& ctx);
/// segmentation/ renders and segmentation.json legend.
nlohmann::json run_segment(const StageContext& ctx);
/// Every stage in order; report.json/report.csv when ground truth is present. Returns mass.json.
nlohmann::json run_pipeline(const StageContext& ctx);

/// Patch and text requests for a cloud, its views and a dictionary.
nlohmann::json plan_requests(const GaussianCloud& cloud, const std::vector<CameraView>& views,
                             const MaterialDictionary& dictionary, const propagation::PropagationConfig& config);

struct EvaluateOptions {
  std::filesystem::path dataset_root;
  std::filesystem::path out_root;
  std::optional<std::filesystem::path> config_path;
  Ablations ablations;
  std::vector<std::string> subset;
  bool paper_reference = false;
  std::optional<std::uint64_t> seed;
  std::shared_ptr<net::Transport> transport;
};

/// Pipeline over every object of a dataset; report.json and report.csv in out_root.
eval::Report run_evaluate(const EvaluateOptions& options);

}  // namespace pugs::app
