#include "pugs/loss/losses.hpp"

#include "pugs/core/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace pugs::loss {

void LossWeights::validate() const {
  if (!(lambda_ssim >= 0.0 && lambda_ssim <= 1.0)) throw ConfigError("lambda_ssim must be in [0, 1]");
  if (!(lambda_geo >= 0.0)) throw ConfigError("lambda_geo must be >= 0");
  if (!(lambda_sparse >= 0.0)) throw ConfigError("lambda_sparse must be >= 0");
}

LossWeights LossWeights::without_garl() const {
  LossWeights w = *this;
  w.lambda_geo = 0.0;
  w.lambda_sparse = 0.0;
  return w;
}

EdgeWeightMode edge_weight_mode_from_string(const std::string& s) {
  if (s == "as_printed") return EdgeWeightMode::AsPrinted;
  if (s == "inverted") return EdgeWeightMode::Inverted;
  throw ConfigError("edge_weight_mode must be 'as_printed' or 'inverted'");
}

std::string to_string(EdgeWeightMode mode) { return mode == EdgeWeightMode::AsPrinted ? "as_printed" : "inverted"; }

namespace {

void require_same_shape(const ImageF& a, const ImageF& b) {
  if (a.width != b.width || a.height != b.height || a.channels != b.channels) {
    throw ValidationError("image dimensions differ: " + std::to_string(a.width) + "x" + std::to_string(a.height) +
                          "x" + std::to_string(a.channels) + " vs " + std::to_string(b.width) + "x" +
                          std::to_string(b.height) + "x" + std::to_string(b.channels));
  }
}

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;

std::array<double, kWindow> gaussian_kernel() {
  std::array<double, kWindow> k{};
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double x = i - kWindow / 2;
    k[i] = std::exp(-x * x / (2.0 * kSigma * kSigma));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

/// Separable 'same' convolution of one channel plane with zero padding.
std::vector<double> blur(const std::vector<double>& plane, int w, int h) {
  static const auto kernel = gaussian_kernel();
  const int r = kWindow / 2;
  std::vector<double> tmp(plane.size(), 0.0), out(plane.size(), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int k = -r; k <= r; ++k) {
        const int xx = x + k;
        if (xx >= 0 && xx < w) s += kernel[k + r] * plane[static_cast<std::size_t>(y) * w + xx];
      }
      tmp[static_cast<std::size_t>(y) * w + x] = s;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int k = -r; k <= r; ++k) {
        const int yy = y + k;
        if (yy >= 0 && yy < h) s += kernel[k + r] * tmp[static_cast<std::size_t>(yy) * w + x];
      }
      out[static_cast<std::size_t>(y) * w + x] = s;
    }
  return out;
}

double luminance(const ImageF& img, int x, int y) {
  if (img.channels < 3) return img.at(x, y, 0);
  return 0.299 * img.at(x, y, 0) + 0.587 * img.at(x, y, 1) + 0.114 * img.at(x, y, 2);
}

}  // namespace

double l1_loss(const ImageF& a, const ImageF& b) {
  require_same_shape(a, b);
  if (a.data.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += std::abs(a.data[i] - b.data[i]);
  return s / static_cast<double>(a.data.size());
}

double ssim(const ImageF& a, const ImageF& b) {
  require_same_shape(a, b);
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const int w = a.width, h = a.height;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (n == 0) return 1.0;
  double total = 0.0;
  std::vector<double> pa(n), pb(n), paa(n), pbb(n), pab(n);
  for (int c = 0; c < a.channels; ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      const double va = a.data[i * a.channels + c];
      const double vb = b.data[i * b.channels + c];
      pa[i] = va;
      pb[i] = vb;
      paa[i] = va * va;
      pbb[i] = vb * vb;
      pab[i] = va * vb;
    }
    const auto mu_a = blur(pa, w, h), mu_b = blur(pb, w, h);
    const auto e_aa = blur(paa, w, h), e_bb = blur(pbb, w, h), e_ab = blur(pab, w, h);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double var_a = e_aa[i] - mu_a[i] * mu_a[i];
      const double var_b = e_bb[i] - mu_b[i] * mu_b[i];
      const double cov = e_ab[i] - mu_a[i] * mu_b[i];
      sum += ((2.0 * mu_a[i] * mu_b[i] + c1) * (2.0 * cov + c2)) /
             ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (var_a + var_b + c2));
    }
    total += sum / static_cast<double>(n);
  }
  return total / a.channels;
}

double photometric_loss(const ImageF& rendered, const ImageF& target, double lambda_ssim) {
  require_same_shape(rendered, target);
  if (!(lambda_ssim >= 0.0 && lambda_ssim <= 1.0)) throw ValidationError("lambda_ssim must be in [0, 1]");
  double loss = (1.0 - lambda_ssim) * l1_loss(rendered, target);
  if (lambda_ssim > 0.0) loss += lambda_ssim * (1.0 - ssim(rendered, target));
  return loss;
}

ImageF image_gradient_weight(const ImageF& image, EdgeWeightMode mode) {
  const int w = image.width, h = image.height;
  ImageF lum(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) lum.at(x, y) = luminance(image, x, y);
  auto at = [&](int x, int y) { return lum.at(std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1)); };
  ImageF mag(w, h, 1);
  double max_mag = 0.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double gx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1)) -
                        (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
      const double gy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1)) -
                        (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
      mag.at(x, y) = std::sqrt(gx * gx + gy * gy);
      max_mag = std::max(max_mag, mag.at(x, y));
    }
  for (double& v : mag.data) {
    const double g = max_mag > 0.0 ? v / max_mag : 0.0;
    v = std::pow(mode == EdgeWeightMode::AsPrinted ? g : 1.0 - g, 5);
  }
  return mag;
}

ImageF depth_normals(const render::RenderBuffers& buffers, const CameraView& view) {
  const int w = buffers.width, h = buffers.height;
  if (buffers.depth.empty() || buffers.alpha.empty()) throw ValidationError("geometry terms need depth and alpha");
  auto valid = [&](int x, int y) { return x >= 0 && y >= 0 && x < w && y < h && buffers.alpha.at(x, y) >= 0.5; };
  auto point = [&](int x, int y) {
    const double z = buffers.depth.at(x, y) / buffers.alpha.at(x, y);
    return Vec3((x + 0.5 - view.cx()) / view.fx() * z, (y + 0.5 - view.cy()) / view.fy() * z, z);
  };
  // central difference when both neighbors exist, one-sided otherwise
  auto tangent = [&](int x, int y, int dx, int dy, Vec3& out) {
    const bool fwd = valid(x + dx, y + dy), bwd = valid(x - dx, y - dy);
    if (fwd && bwd) {
      out = point(x + dx, y + dy) - point(x - dx, y - dy);
    } else if (fwd) {
      out = point(x + dx, y + dy) - point(x, y);
    } else if (bwd) {
      out = point(x, y) - point(x - dx, y - dy);
    } else {
      return false;
    }
    return true;
  };

  ImageF normals(w, h, 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!valid(x, y)) continue;
      Vec3 tx, ty;
      if (!tangent(x, y, 1, 0, tx) || !tangent(x, y, 0, 1, ty)) continue;
      Vec3 n = tx.cross(ty);
      const double len = n.norm();
      if (!(len > 0.0)) continue;
      n /= len;
      if (n.dot(point(x, y)) > 0.0) n = -n;
      for (int c = 0; c < 3; ++c) normals.at(x, y, c) = n[c];
    }
  return normals;
}

double geometry_loss(const render::RenderBuffers& buffers, const CameraView& view, const ImageF& weight) {
  if (buffers.normal.empty()) throw ValidationError("geometry loss needs the normal buffer");
  if (weight.width != buffers.width || weight.height != buffers.height) {
    throw ValidationError("weight map does not match buffers");
  }
  const ImageF nd = depth_normals(buffers, view);
  double sum = 0.0;
  std::size_t count = 0;
  for (int y = 0; y < buffers.height; ++y)
    for (int x = 0; x < buffers.width; ++x) {
      const Vec3 a(nd.at(x, y, 0), nd.at(x, y, 1), nd.at(x, y, 2));
      Vec3 b(buffers.normal.at(x, y, 0), buffers.normal.at(x, y, 1), buffers.normal.at(x, y, 2));
      const double len = b.norm();
      if (a.squaredNorm() == 0.0 || !(len > 0.0)) continue;
      b /= len;
      sum += weight.at(x, y) * (a - b).lpNorm<1>();
      ++count;
    }
  const std::size_t pixels = static_cast<std::size_t>(buffers.width) * buffers.height;
  if (count == 0 || count * 100 < pixels) {
    throw DegenerateError("view '" + view.name + "': fewer than 1% valid pixels for the geometry loss");
  }
  return sum / static_cast<double>(count);
}

double geometry_loss(const render::RenderBuffers& buffers, const CameraView& view, EdgeWeightMode mode) {
  if (view.image.empty()) throw ValidationError("view '" + view.name + "' has no image for the edge weight");
  return geometry_loss(buffers, view, image_gradient_weight(view.image, mode));
}

double sparse_loss(std::span<const double> opacities) {
  if (opacities.empty()) throw ValidationError("sparse loss of an empty opacity set");
  constexpr double eps = 1e-6;
  double sum = 0.0;
  for (double s : opacities) {
    const double c = std::clamp(s, eps, 1.0 - eps);
    sum += std::log(c) + std::log(1.0 - c);
  }
  return sum / static_cast<double>(opacities.size());
}

double sparse_loss(const GaussianCloud& cloud) {
  std::vector<double> op;
  op.reserve(cloud.size());
  for (const auto& g : cloud.gaussians) op.push_back(g.opacity());
  return sparse_loss(op);
}

nlohmann::json LossBreakdown::to_json() const {
  return {{"photometric", photometric}, {"geometry", geometry}, {"sparse", sparse}, {"total", total}};
}

LossBreakdown total_loss(const render::RenderBuffers& buffers, const CameraView& view, const GaussianCloud& cloud,
                         const LossWeights& weights, EdgeWeightMode mode) {
  weights.validate();
  if (view.image.empty()) throw ValidationError("view '" + view.name + "' has no target image");
  LossBreakdown out;
  out.photometric = photometric_loss(buffers.rgb, view.image, weights.lambda_ssim);
  if (weights.lambda_geo > 0.0) out.geometry = geometry_loss(buffers, view, mode);
  if (weights.lambda_sparse > 0.0) out.sparse = sparse_loss(cloud);
  out.total = out.photometric + weights.lambda_geo * out.geometry + weights.lambda_sparse * out.sparse;
  return out;
}

}  // namespace pugs::loss
