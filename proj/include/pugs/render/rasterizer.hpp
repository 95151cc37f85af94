#pragma once

#include "pugs/core/types.hpp"

#include <cstdint>
#include <vector>

namespace pugs::render {

inline constexpr int kTileSize = 16;
inline constexpr double kCovarianceDilation = 0.3;
inline constexpr double kAlphaClip = 0.99;
inline constexpr double kMinAlpha = 1.0 / 255.0;
inline constexpr double kTransmittanceCutoff = 1.0 / 255.0;

/// A Gaussian after projection into one view.
struct ProjectedGaussian {
  Vec2 mean2d = Vec2::Zero();
  Mat2 cov2d = Mat2::Identity();
  /// Inverse of cov2d.
  Mat2 conic = Mat2::Identity();
  double depth = 0.0;
  Vec3 color = Vec3::Zero();
  double opacity = 0.0;
  Vec3 normal_cam = Vec3::UnitZ();
  /// Index into the source cloud.
  std::uint32_t index = 0;
  /// Pixel radius outside of which alpha < 1/255.
  double radius = 0.0;

  /// Blending alpha at a continuous pixel position, clipped to 0.99.
  double alpha_at(double px, double py) const;
};

struct ProjectOptions {
  double near_clip = 0.01;
  /// Highest SH degree used for color; -1 uses the cloud's degree.
  int max_sh_degree = -1;
};

/// Projects every Gaussian in front of the near plane whose footprint reaches the viewport.
/// Output is in cloud order.
std::vector<ProjectedGaussian> project(const GaussianCloud& cloud, const CameraView& view,
                                       const ProjectOptions& options = {});

struct RenderBuffers {
  int width = 0;
  int height = 0;
  int feature_dim = 0;
  ImageF rgb;      // 3 channels
  ImageF depth;    // alpha-composited camera z
  ImageF normal;   // alpha-composited camera-space normal
  ImageF feature;  // D channels
  ImageF alpha;    // 1 - final transmittance
};

struct RasterizeOptions {
  Vec3 background = Vec3::Zero();
  bool rgb = true;
  bool depth = true;
  bool normal = true;
  bool feature = false;
};

/// Tile-based front-to-back compositing C = sum_i T_i a_i c_i applied to every requested channel.
/// Feature channels need `cloud` (features are looked up by ProjectedGaussian::index).
RenderBuffers rasterize(const std::vector<ProjectedGaussian>& projected, const CameraView& view,
                        const RasterizeOptions& options = {}, const GaussianCloud* cloud = nullptr);

/// project + rasterize.
RenderBuffers render(const GaussianCloud& cloud, const CameraView& view, const RasterizeOptions& options = {},
                     const ProjectOptions& project_options = {});

/// Per-pixel blend weights T_i * a_i in compressed-row form.
struct PixelWeights {
  struct Entry {
    std::uint32_t gaussian;
    double weight;
  };
  int width = 0;
  int height = 0;
  /// offsets[p]..offsets[p+1] index `entries` for pixel p = y * width + x.
  std::vector<std::size_t> offsets;
  std::vector<Entry> entries;

  std::size_t pixel(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
  const Entry* begin(std::size_t p) const { return entries.data() + offsets[p]; }
  const Entry* end(std::size_t p) const { return entries.data() + offsets[p + 1]; }
  double total(std::size_t p) const;
};

PixelWeights render_feature_weights(const std::vector<ProjectedGaussian>& projected, const CameraView& view);

/// Sorts by (depth, index); the compositing order shared by every render path.
void sort_by_depth(std::vector<ProjectedGaussian>& projected);

}  // namespace pugs::render
