#include "pugs/eval/segmentation.hpp"

#include "pugs/core/error.hpp"
#include "pugs/core/image_io.hpp"
#include "pugs/render/rasterizer.hpp"
#include "pugs/render/sh.hpp"

#include <cmath>

namespace pugs::eval {

namespace {

Vec3 hsv_to_rgb(double h, double s, double v) {
  const double c = v * s;
  const double hp = std::fmod(h * 6.0, 6.0);
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  Vec3 rgb;
  if (hp < 1) rgb = {c, x, 0};
  else if (hp < 2) rgb = {x, c, 0};
  else if (hp < 3) rgb = {0, c, x};
  else if (hp < 4) rgb = {0, x, c};
  else if (hp < 5) rgb = {x, 0, c};
  else rgb = {c, 0, x};
  return rgb.array() + (v - c);
}

}  // namespace

Vec3 palette_color(int material_id) {
  static const Vec3 base[] = {{0.894, 0.102, 0.110}, {0.216, 0.494, 0.722}, {0.302, 0.686, 0.290},
                              {0.596, 0.306, 0.639}, {1.000, 0.498, 0.000}, {1.000, 1.000, 0.200},
                              {0.651, 0.337, 0.157}, {0.969, 0.506, 0.749}};
  if (material_id < 0) return Vec3(0.5, 0.5, 0.5);
  if (material_id < 8) return base[material_id];
  const double golden = 0.6180339887498949;
  return hsv_to_rgb(std::fmod(material_id * golden, 1.0), 0.65, 0.95);
}

GaussianCloud colorize(const GaussianCloud& cloud, const std::vector<std::int32_t>& material_ids) {
  if (material_ids.size() != cloud.size()) throw ValidationError("one material id per Gaussian is required");
  GaussianCloud out = cloud;
  out.sh_degree = 0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.gaussians[i].sh = Eigen::MatrixX3d::Zero(1, 3);
    out.gaussians[i].sh.row(0) = render::rgb_to_sh_dc(palette_color(material_ids[i])).transpose();
  }
  return out;
}

void material_segmentation_export(const GaussianCloud& cloud, const std::vector<std::int32_t>& material_ids,
                                  const std::vector<CameraView>& views, const std::filesystem::path& out_dir) {
  const GaussianCloud colored = colorize(cloud, material_ids);
  std::filesystem::create_directories(out_dir);
  PlyColumn id{"material_id", {}, true};
  PlyColumn red{"red", {}, true}, green{"green", {}, true}, blue{"blue", {}, true};
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3 c = palette_color(material_ids[i]);
    id.values.push_back(material_ids[i]);
    red.values.push_back(std::lround(255.0 * c.x()));
    green.values.push_back(std::lround(255.0 * c.y()));
    blue.values.push_back(std::lround(255.0 * c.z()));
  }
  save_gaussian_ply(out_dir / "segmentation.ply", colored, {id, red, green, blue});
  render::RasterizeOptions options;
  options.depth = options.normal = false;
  for (const auto& view : views) {
    save_png(out_dir / ("segmentation_" + view.name + ".png"), render::render(colored, view, options).rgb);
  }
}

}  // namespace pugs::eval
