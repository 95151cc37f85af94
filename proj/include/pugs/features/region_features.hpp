#pragma once

#include "pugs/core/types.hpp"
#include "pugs/render/rasterizer.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace pugs::features {

/// Two pixels (row-major linear indices) and whether they share a mask id.
struct PixelPair {
  std::uint32_t p1 = 0;
  std::uint32_t p2 = 0;
  bool same_mask = false;
};

struct PixelPairBatch {
  std::string view;
  std::vector<PixelPair> pairs;
  /// Set when the view has a single mask id, so every pair is same-mask.
  bool degenerate = false;

  std::size_t same_count() const;
};

inline constexpr double kValidAlpha = 0.5;

/// Stratified sampling: round(balance * n) same-mask pairs, the rest cross-mask. Pixels with mask id 0 or
/// alpha < 0.5 are never drawn.
PixelPairBatch sample_pixel_pairs(const MaskMap& mask, const ImageF& alpha, std::size_t n, std::mt19937_64& rng,
                                  double balance = 0.5, const std::string& view_name = {});
/// Seeded convenience overload.
PixelPairBatch sample_pixel_pairs(const CameraView& view, const ImageF& alpha, std::size_t n, std::uint64_t seed,
                                  double balance = 0.5);

/// Cosine of two feature rows; 0 when either is the zero vector.
double cosine(const double* a, const double* b, int dim);

/// Mean over pairs of [1 - 2 same] * max(cos(F(p1), F(p2)), 0).
double contrastive_loss(const ImageF& feature_map, const PixelPairBatch& batch);

/// Mean of (1 - |F(p)|) over pixels with alpha >= 0.5.
double norm_regularizer(const ImageF& feature_map, const ImageF& alpha);

/// Frozen geometry of one view: blend weights and coverage.
struct ViewWeights {
  std::string view;
  render::PixelWeights weights;
  ImageF alpha;
};

ViewWeights precompute_view_weights(const GaussianCloud& cloud, const CameraView& view,
                                    const render::ProjectOptions& options = {});

/// F(p) = sum_i w_i(p) f_i for every pixel.
ImageF feature_map_from_weights(const GaussianCloud& cloud, const ViewWeights& view);

struct RegionLossTerms {
  bool contrastive = true;
  bool norm = true;
};

/// Loss value and its exact gradient with respect to every per-Gaussian feature (rows of an N x D matrix).
/// Blend weights are constants. Gaussians with no pixel weight receive zero gradient.
struct RegionGradient {
  double loss = 0.0;
  Eigen::MatrixXd grad;
};

RegionGradient feature_gradients(const GaussianCloud& cloud, const ViewWeights& view, const PixelPairBatch& batch,
                                 const RegionLossTerms& terms = {});

enum class OptimizerKind { Sgd, Adam };

OptimizerKind optimizer_from_string(const std::string& s);
std::string to_string(OptimizerKind kind);

struct TrainerConfig {
  int iterations = 3000;
  std::size_t pairs_per_iteration = 4096;
  double learning_rate = 2.5e-3;
  int feature_dim = 32;
  OptimizerKind optimizer = OptimizerKind::Adam;
  std::uint64_t seed = 0;
  double balance = 0.5;
  double init_std = 0.01;

  void validate() const;
  nlohmann::json to_json() const;
};

struct TrainResult {
  GaussianCloud cloud;
  /// Mean region loss over views, one entry per iteration (before the update).
  std::vector<double> loss_history;
  std::size_t degenerate_batches = 0;
};

/// Optimizes only the region features; geometry, color and opacity are untouched.
TrainResult train_features(const GaussianCloud& cloud, const std::vector<CameraView>& views,
                           const TrainerConfig& config, const render::ProjectOptions& project_options = {});

}  // namespace pugs::features
