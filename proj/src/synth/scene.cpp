#include "pugs/synth/scene.hpp"

#include "pugs/core/error.hpp"
#include "pugs/render/rasterizer.hpp"
#include "pugs/render/sh.hpp"

#include <cmath>
#include <map>
#include <random>

namespace pugs::synth {

CameraView look_at(const std::string& name, const Vec3& eye, const Vec3& target, int width, int height, double focal,
                   const Vec3& up_hint) {
  CameraView v;
  v.name = name;
  v.image_file = name + ".png";
  v.width = width;
  v.height = height;
  v.intrinsics << focal, 0, width / 2.0, 0, focal, height / 2.0, 0, 0, 1;
  const Vec3 z = (target - eye).normalized();
  Vec3 x = up_hint.cross(z);
  if (x.norm() < 1e-9) x = Vec3::UnitX().cross(z);
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 r_cw;
  r_cw.col(0) = x;
  r_cw.col(1) = y;
  r_cw.col(2) = z;
  Eigen::Isometry3d c2w = Eigen::Isometry3d::Identity();
  c2w.linear() = r_cw;
  c2w.translation() = eye;
  v.world_to_camera = c2w.inverse();
  return v;
}

MaskMap render_label_mask(const GaussianCloud& cloud, const CameraView& view, const std::vector<int>& labels) {
  if (labels.size() != cloud.size()) throw ValidationError("one label per Gaussian is required");
  const auto weights = render::render_feature_weights(render::project(cloud, view), view);
  MaskMap mask(view.width, view.height, 1);
  for (std::size_t p = 0; p < mask.data.size(); ++p) {
    if (weights.total(p) < 0.5) continue;
    std::map<int, double> per_label;
    for (auto e = weights.begin(p); e != weights.end(p); ++e) per_label[labels[e->gaussian]] += e->weight;
    int best = -1;
    double best_w = -1.0;
    for (const auto& [label, w] : per_label) {
      if (w > best_w) {
        best = label;
        best_w = w;
      }
    }
    mask.data[p] = static_cast<std::uint16_t>(best + 1);
  }
  return mask;
}

TwoClusterScene two_cluster_scene(const TwoClusterOptions& o) {
  if (o.gaussians_per_cluster <= 0) throw ValidationError("gaussians_per_cluster must be positive");
  TwoClusterScene scene;
  scene.cluster_centers[0] = Vec3(-o.separation / 2.0, 0.0, 0.0);
  scene.cluster_centers[1] = Vec3(o.separation / 2.0, 0.0, 0.0);
  const Vec3 colors[2] = {Vec3(0.8, 0.2, 0.15), Vec3(0.15, 0.3, 0.85)};

  std::mt19937_64 rng(o.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  scene.cloud.sh_degree = 0;
  for (int c = 0; c < 2; ++c) {
    // Fibonacci sphere with a random spin keeps the shells evenly covered
    const double golden = M_PI * (3.0 - std::sqrt(5.0));
    const double spin = std::uniform_real_distribution<double>(0.0, 2.0 * M_PI)(rng);
    for (int i = 0; i < o.gaussians_per_cluster; ++i) {
      const double y = 1.0 - 2.0 * (i + 0.5) / o.gaussians_per_cluster;
      const double r = std::sqrt(1.0 - y * y);
      const double phi = golden * i + spin;
      const Vec3 n(r * std::cos(phi), y, r * std::sin(phi));
      Gaussian g;
      g.center = scene.cluster_centers[c] + o.radius * n;
      // flat disc tangent to the shell: local z axis along the outward normal
      const Eigen::Quaterniond q = Eigen::Quaterniond::FromTwoVectors(Vec3::UnitZ(), n);
      g.rotation = Vec4(q.w(), q.x(), q.y(), q.z());
      g.log_scale = Vec3(std::log(o.splat_scale), std::log(o.splat_scale), std::log(o.splat_scale * 0.2));
      g.opacity_logit = logit(o.opacity);
      g.sh = Eigen::MatrixX3d::Zero(1, 3);
      const Vec3 jitter(0.03 * normal(rng), 0.03 * normal(rng), 0.03 * normal(rng));
      g.sh.row(0) = render::rgb_to_sh_dc(colors[c] + jitter).transpose();
      scene.cloud.gaussians.push_back(g);
      scene.labels.push_back(c);
    }
  }

  const double d = o.camera_distance;
  struct Pose {
    const char* name;
    Vec3 eye;
    Vec3 up;
  };
  const Pose poses[] = {{"front", Vec3(0, 0, -d), Vec3(0, -1, 0)},
                        {"back", Vec3(0, 0, d), Vec3(0, -1, 0)},
                        {"above", Vec3(0, -d, 0), Vec3(0, 0, 1)},
                        {"below", Vec3(0, d, 0), Vec3(0, 0, -1)}};
  for (const auto& pose : poses) {
    CameraView view = look_at(pose.name, pose.eye, Vec3::Zero(), o.image_width, o.image_height, o.focal, pose.up);
    render::RasterizeOptions ro;
    ro.depth = ro.normal = false;
    view.image = render::render(scene.cloud, view, ro).rgb;
    view.mask = render_label_mask(scene.cloud, view, scene.labels);
    scene.views.push_back(std::move(view));
  }
  return scene;
}

}  // namespace pugs::synth
