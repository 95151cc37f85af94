#pragma once

#include "pugs/core/types.hpp"

#include <cmath>
#include <filesystem>
#include <random>
#include <string>

namespace pugs::test {

/// Fresh, empty scratch directory under the build tree.
inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "pugs_tests" / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

/// Camera at `eye` looking at `target` (OpenCV axes: x right, y down, z forward).
inline CameraView look_at(const std::string& name, const Vec3& eye, const Vec3& target, int width, int height,
                          double focal, const Vec3& up_hint = Vec3(0, -1, 0)) {
  CameraView v;
  v.name = name;
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

inline Gaussian make_gaussian(const Vec3& center, double scale, double opacity, const Vec3& rgb_dc = Vec3::Zero()) {
  Gaussian g;
  g.center = center;
  g.log_scale = Vec3::Constant(std::log(scale));
  g.opacity_logit = logit(opacity);
  g.sh = Eigen::MatrixX3d::Zero(1, 3);
  g.sh.row(0) = rgb_dc.transpose();
  return g;
}

/// Random cloud inside a cube of half-width `extent` around `center`.
inline GaussianCloud random_cloud(std::mt19937_64& rng, int n, int feature_dim, const Vec3& center,
                                  double extent, int sh_degree = 0) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  GaussianCloud cloud;
  cloud.sh_degree = sh_degree;
  cloud.feature_dim = feature_dim;
  const int coeffs = (sh_degree + 1) * (sh_degree + 1);
  for (int i = 0; i < n; ++i) {
    Gaussian g;
    g.center = center + extent * Vec3(u(rng), u(rng), u(rng));
    g.rotation = Vec4(normal(rng), normal(rng), normal(rng), normal(rng)).normalized();
    g.log_scale = Vec3(std::log(0.02 + 0.1 * u01(rng)), std::log(0.02 + 0.1 * u01(rng)),
                       std::log(0.005 + 0.05 * u01(rng)));
    g.opacity_logit = 4.0 * u(rng);
    g.sh = Eigen::MatrixX3d::Zero(coeffs, 3);
    for (int k = 0; k < coeffs; ++k)
      for (int c = 0; c < 3; ++c) g.sh(k, c) = (k == 0 ? 1.5 : 0.3) * u(rng);
    if (feature_dim > 0) {
      g.feature = VecX(feature_dim);
      for (int d = 0; d < feature_dim; ++d) g.feature[d] = normal(rng);
    }
    cloud.gaussians.push_back(g);
  }
  return cloud;
}

}  // namespace pugs::test
