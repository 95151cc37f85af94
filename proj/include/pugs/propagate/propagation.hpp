#pragma once

#include "pugs/core/types.hpp"
#include "pugs/propagate/embeddings.hpp"
#include "pugs/render/rasterizer.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

namespace pugs::propagation {

struct SourcePoint {
  Vec3 position = Vec3::Zero();
  std::size_t gaussian_index = 0;
  /// Renormalized mean of the per-view patch embeddings; empty until gathered.
  VecX embedding;
  int views_seen = 0;
  /// Cosine similarity to each material's text embedding.
  VecX material_weights;
  double property_value = std::numeric_limits<double>::quiet_NaN();
  int material_argmax = -1;

  bool visible() const { return views_seen > 0; }
  bool fused() const { return material_argmax >= 0; }
};

struct PropagationConfig {
  /// Voxel edge as a fraction of the bounding-box diagonal.
  double voxel_fraction = 0.02;
  int patch_size = 65;
  double temperature = 0.1;
  /// Depth-test tolerance as a fraction of the bounding-box diagonal.
  double depth_tolerance_fraction = 0.01;

  void validate() const;
  nlohmann::json to_json() const;
};

/// One representative Gaussian per occupied voxel (cells anchored at the bounding-box minimum): the Gaussian
/// center nearest the centroid of the centers in the voxel, ties to the lower index. Sorted by Gaussian index.
std::vector<SourcePoint> sample_source_points(const GaussianCloud& cloud, double voxel_size);

/// Camera-space depth of the visible surface: composited depth / alpha, +inf where alpha < 0.5.
ImageF surface_depth(const render::RenderBuffers& buffers);

struct PatchRequest {
  std::size_t source = 0;
  std::string view;
  int cx = 0;
  int cy = 0;
  int p = 0;

  std::string key() const { return patch_key(view, cx, cy, p); }
};

/// Patches needed for every source point: the point passes the depth test (z <= surface + tau) and the p x p
/// patch centered on its pixel lies inside the image. `depths` holds one surface_depth map per view.
std::vector<PatchRequest> plan_patches(const std::vector<SourcePoint>& sources, const std::vector<CameraView>& views,
                                       const std::vector<ImageF>& depths, int p, double tau);

/// Fills embedding and views_seen. Throws MissingAssetError naming the first unresolved patch key.
void project_and_gather(std::vector<SourcePoint>& sources, const std::vector<CameraView>& views,
                        const std::vector<ImageF>& depths, int p, double tau, const EmbeddingProvider& provider);

/// Request manifest consumed by the asset exporter: unique patch keys plus one text key per material.
nlohmann::json requests_manifest(const std::vector<PatchRequest>& patches, const std::vector<CameraView>& views,
                                 const MaterialDictionary& dictionary, int p);

/// Temperature softmax over text similarities: rho = sum softmax(w / T)_k y_k. Invisible points are skipped.
void fuse_properties(std::vector<SourcePoint>& sources, const std::vector<double>& values,
                     const std::vector<VecX>& text_embeddings, double temperature);

/// Same, with values collapsed from the dictionary and text vectors from the provider.
void fuse_properties(std::vector<SourcePoint>& sources, const MaterialDictionary& dictionary,
                     const EmbeddingProvider& provider, double temperature);

/// Softmax weights exp(w_k / T) / sum exp(w_j / T), computed with max subtraction.
VecX softmax(const VecX& w, double temperature);

struct PropagationResult {
  /// Per Gaussian: index into the source list, material id (dictionary entry index) and property value.
  std::vector<std::uint32_t> source;
  std::vector<std::int32_t> material_id;
  std::vector<double> value;
  /// Gaussians with a zero feature, assigned to the spatially nearest source instead.
  std::size_t fallback_count = 0;
};

/// Feature-similarity propagation: each Gaussian takes the fused source with the highest cosine similarity
/// (ties to the lower source index). Source Gaussians map to themselves.
PropagationResult propagate(const GaussianCloud& cloud, const std::vector<SourcePoint>& sources);

/// Euclidean nearest fused source (ties to the lower source index).
PropagationResult propagate_nn_baseline(const GaussianCloud& cloud, const std::vector<SourcePoint>& sources);

}  // namespace pugs::propagation
