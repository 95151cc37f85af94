#pragma once

#include "pugs/core/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace pugs::synth {

/// Camera at `eye` looking at `target` (OpenCV axes: x right, y down, z forward).
CameraView look_at(const std::string& name, const Vec3& eye, const Vec3& target, int width, int height, double focal,
                   const Vec3& up_hint = Vec3(0, -1, 0));

struct TwoClusterOptions {
  int gaussians_per_cluster = 48;
  double separation = 1.2;
  double radius = 0.3;
  double splat_scale = 0.07;
  double opacity = 0.9;
  int image_width = 64;
  int image_height = 48;
  double focal = 55.0;
  double camera_distance = 3.0;
  std::uint64_t seed = 0;
};

/// Two shells of Gaussians side by side along x, seen from four views (front, back, above, below).
/// Images are renders of the cloud; mask ids are 1 and 2, chosen per pixel by the cluster with the larger
/// blend weight, 0 where alpha < 0.5.
struct TwoClusterScene {
  GaussianCloud cloud;
  std::vector<CameraView> views;
  /// Cluster (0 or 1) of every Gaussian.
  std::vector<int> labels;
  Vec3 cluster_centers[2];
};

TwoClusterScene two_cluster_scene(const TwoClusterOptions& options = {});

/// Mask map of `view` labelled by `labels` (value + 1) through the blend weights of `cloud`.
MaskMap render_label_mask(const GaussianCloud& cloud, const CameraView& view, const std::vector<int>& labels);

}  // namespace pugs::synth
