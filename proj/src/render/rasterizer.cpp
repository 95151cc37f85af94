#include "pugs/render/rasterizer.hpp"

#include "pugs/core/error.hpp"
#include "pugs/render/sh.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pugs::render {

double ProjectedGaussian::alpha_at(double px, double py) const {
  const double dx = px - mean2d.x();
  const double dy = py - mean2d.y();
  const double power = -0.5 * (conic(0, 0) * dx * dx + 2.0 * conic(0, 1) * dx * dy + conic(1, 1) * dy * dy);
  return std::min(kAlphaClip, opacity * std::exp(power));
}

std::vector<ProjectedGaussian> project(const GaussianCloud& cloud, const CameraView& view,
                                       const ProjectOptions& options) {
  if (!(options.near_clip > 0.0)) throw ValidationError("near_clip must be positive");
  const int degree = options.max_sh_degree < 0 ? cloud.sh_degree : std::min(options.max_sh_degree, cloud.sh_degree);
  const Mat3 rot_wc = view.world_to_camera.linear();
  const Vec3 cam_center = view.camera_center();

  std::vector<ProjectedGaussian> out;
  out.reserve(cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Gaussian& g = cloud.gaussians[i];
    const Vec3 t = view.to_camera(g.center);
    if (t.z() <= options.near_clip) continue;

    const double opacity = g.opacity();
    // beyond this Mahalanobis radius the unclipped alpha is below 1/255
    if (opacity * 255.0 <= 1.0) continue;
    const double mahalanobis = std::sqrt(2.0 * std::log(255.0 * opacity));

    Eigen::Matrix<double, 2, 3> jac;
    const double z2 = t.z() * t.z();
    jac << view.fx() / t.z(), 0.0, -view.fx() * t.x() / z2, 0.0, view.fy() / t.z(), -view.fy() * t.y() / z2;
    const Mat3 rot = g.rotation_matrix();
    const Mat3 rs = rot * g.scale().asDiagonal();
    const Mat3 cov_cam = rot_wc * (rs * rs.transpose()) * rot_wc.transpose();
    Mat2 cov2d = jac * cov_cam * jac.transpose();
    cov2d(0, 0) += kCovarianceDilation;
    cov2d(1, 1) += kCovarianceDilation;
    cov2d(0, 1) = cov2d(1, 0) = 0.5 * (cov2d(0, 1) + cov2d(1, 0));
    const double det = cov2d.determinant();
    if (!(det > 0.0)) continue;

    const double mid = 0.5 * (cov2d(0, 0) + cov2d(1, 1));
    const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
    // one pixel of slack so pixels on the boundary are always tested
    const double radius = mahalanobis * std::sqrt(lambda_max) + 1.0;

    ProjectedGaussian p;
    p.mean2d = {view.fx() * t.x() / t.z() + view.cx(), view.fy() * t.y() / t.z() + view.cy()};
    if (p.mean2d.x() + radius < 0.0 || p.mean2d.x() - radius > view.width || p.mean2d.y() + radius < 0.0 ||
        p.mean2d.y() - radius > view.height) {
      continue;
    }
    p.cov2d = cov2d;
    p.conic = Mat2{{cov2d(1, 1) / det, -cov2d(0, 1) / det}, {-cov2d(0, 1) / det, cov2d(0, 0) / det}};
    p.depth = t.z();
    p.color = evaluate_sh(g.sh, degree, (g.center - cam_center).normalized());
    p.opacity = opacity;
    int min_axis = 0;
    g.log_scale.minCoeff(&min_axis);
    Vec3 n = rot_wc * rot.col(min_axis);
    if (n.dot(t) > 0.0) n = -n;
    p.normal_cam = n.normalized();
    p.index = static_cast<std::uint32_t>(i);
    p.radius = radius;
    out.push_back(p);
  }
  return out;
}

void sort_by_depth(std::vector<ProjectedGaussian>& projected) {
  std::stable_sort(projected.begin(), projected.end(), [](const ProjectedGaussian& a, const ProjectedGaussian& b) {
    if (a.depth != b.depth) return a.depth < b.depth;
    return a.index < b.index;
  });
}

namespace {

/// Buckets depth-sorted Gaussians into 16x16 tiles and runs the compositing loop per pixel.
/// `contribute(pixel, gaussian, weight)` is called front to back; `finish(pixel, transmittance)` once per pixel.
template <typename Contribute, typename Finish>
void composite(const std::vector<ProjectedGaussian>& projected, int width, int height, Contribute&& contribute,
               Finish&& finish) {
  std::vector<const ProjectedGaussian*> order(projected.size());
  std::transform(projected.begin(), projected.end(), order.begin(), [](const auto& p) { return &p; });
  std::stable_sort(order.begin(), order.end(), [](const ProjectedGaussian* a, const ProjectedGaussian* b) {
    if (a->depth != b->depth) return a->depth < b->depth;
    return a->index < b->index;
  });

  const int tiles_x = (width + kTileSize - 1) / kTileSize;
  const int tiles_y = (height + kTileSize - 1) / kTileSize;
  std::vector<std::vector<const ProjectedGaussian*>> tiles(static_cast<std::size_t>(tiles_x) * tiles_y);
  for (const ProjectedGaussian* p : order) {
    // pixel x covers center x + 0.5
    const int x0 = std::max(0, static_cast<int>(std::floor(p->mean2d.x() - p->radius - 0.5)));
    const int x1 = std::min(width - 1, static_cast<int>(std::ceil(p->mean2d.x() + p->radius - 0.5)));
    const int y0 = std::max(0, static_cast<int>(std::floor(p->mean2d.y() - p->radius - 0.5)));
    const int y1 = std::min(height - 1, static_cast<int>(std::ceil(p->mean2d.y() + p->radius - 0.5)));
    if (x0 > x1 || y0 > y1) continue;
    for (int ty = y0 / kTileSize; ty <= y1 / kTileSize; ++ty)
      for (int tx = x0 / kTileSize; tx <= x1 / kTileSize; ++tx) tiles[ty * tiles_x + tx].push_back(p);
  }

  for (int ty = 0; ty < tiles_y; ++ty) {
    for (int tx = 0; tx < tiles_x; ++tx) {
      const auto& list = tiles[ty * tiles_x + tx];
      const int ymax = std::min(height, (ty + 1) * kTileSize);
      const int xmax = std::min(width, (tx + 1) * kTileSize);
      for (int y = ty * kTileSize; y < ymax; ++y) {
        for (int x = tx * kTileSize; x < xmax; ++x) {
          const std::size_t pixel = static_cast<std::size_t>(y) * width + x;
          double transmittance = 1.0;
          for (const ProjectedGaussian* p : list) {
            const double alpha = p->alpha_at(x + 0.5, y + 0.5);
            if (alpha < kMinAlpha) continue;
            contribute(pixel, *p, transmittance * alpha);
            transmittance *= 1.0 - alpha;
            if (transmittance < kTransmittanceCutoff) break;
          }
          finish(pixel, transmittance);
        }
      }
    }
  }
}

}  // namespace

RenderBuffers rasterize(const std::vector<ProjectedGaussian>& projected, const CameraView& view,
                        const RasterizeOptions& options, const GaussianCloud* cloud) {
  const int w = view.width, h = view.height;
  RenderBuffers buf;
  buf.width = w;
  buf.height = h;
  buf.alpha = ImageF(w, h, 1);
  if (options.rgb) buf.rgb = ImageF(w, h, 3);
  if (options.depth) buf.depth = ImageF(w, h, 1);
  if (options.normal) buf.normal = ImageF(w, h, 3);
  if (options.feature) {
    if (!cloud) throw ValidationError("feature rendering needs the source cloud");
    buf.feature_dim = cloud->feature_dim;
    buf.feature = ImageF(w, h, cloud->feature_dim);
  }
  const int dim = buf.feature_dim;

  composite(
      projected, w, h,
      [&](std::size_t pixel, const ProjectedGaussian& p, double weight) {
        if (options.rgb)
          for (int c = 0; c < 3; ++c) buf.rgb.data[pixel * 3 + c] += weight * p.color[c];
        if (options.depth) buf.depth.data[pixel] += weight * p.depth;
        if (options.normal)
          for (int c = 0; c < 3; ++c) buf.normal.data[pixel * 3 + c] += weight * p.normal_cam[c];
        if (options.feature && dim > 0) {
          const VecX& f = cloud->gaussians[p.index].feature;
          double* dst = buf.feature.data.data() + pixel * dim;
          for (int d = 0; d < dim; ++d) dst[d] += weight * f[d];
        }
      },
      [&](std::size_t pixel, double transmittance) {
        buf.alpha.data[pixel] = 1.0 - transmittance;
        if (options.rgb)
          for (int c = 0; c < 3; ++c) buf.rgb.data[pixel * 3 + c] += transmittance * options.background[c];
      });
  return buf;
}

RenderBuffers render(const GaussianCloud& cloud, const CameraView& view, const RasterizeOptions& options,
                     const ProjectOptions& project_options) {
  return rasterize(project(cloud, view, project_options), view, options, &cloud);
}

double PixelWeights::total(std::size_t p) const {
  double s = 0.0;
  for (const Entry* e = begin(p); e != end(p); ++e) s += e->weight;
  return s;
}

PixelWeights render_feature_weights(const std::vector<ProjectedGaussian>& projected, const CameraView& view) {
  const std::size_t pixels = static_cast<std::size_t>(view.width) * view.height;
  // tiles are visited out of row-major order, so gather per pixel and flatten afterwards
  std::vector<std::vector<PixelWeights::Entry>> per_pixel(pixels);
  composite(
      projected, view.width, view.height,
      [&](std::size_t pixel, const ProjectedGaussian& p, double weight) {
        per_pixel[pixel].push_back({p.index, weight});
      },
      [](std::size_t, double) {});

  PixelWeights out;
  out.width = view.width;
  out.height = view.height;
  out.offsets.resize(pixels + 1, 0);
  for (std::size_t p = 0; p < pixels; ++p) out.offsets[p + 1] = out.offsets[p] + per_pixel[p].size();
  out.entries.reserve(out.offsets.back());
  for (auto& list : per_pixel) out.entries.insert(out.entries.end(), list.begin(), list.end());
  return out;
}

}  // namespace pugs::render
