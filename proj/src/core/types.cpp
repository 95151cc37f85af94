#include "pugs/core/types.hpp"

#include "pugs/core/error.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace pugs {

double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

Mat3 Gaussian::rotation_matrix() const {
  Eigen::Quaterniond q(rotation[0], rotation[1], rotation[2], rotation[3]);
  q.normalize();
  return q.toRotationMatrix();
}

Mat3 Gaussian::covariance() const {
  const Mat3 r = rotation_matrix();
  const Mat3 rs = r * scale().asDiagonal();
  return rs * rs.transpose();
}

void GaussianCloud::validate() const {
  const long sh_rows = static_cast<long>((sh_degree + 1) * (sh_degree + 1));
  for (std::size_t i = 0; i < gaussians.size(); ++i) {
    const Gaussian& g = gaussians[i];
    const auto where = " (gaussian " + std::to_string(i) + ")";
    if (!g.center.allFinite() || !g.rotation.allFinite() || !g.log_scale.allFinite() ||
        !std::isfinite(g.opacity_logit) || !g.sh.allFinite() ||
        (g.feature.size() > 0 && !g.feature.allFinite())) {
      throw ValidationError("non-finite gaussian field" + where);
    }
    if (g.sh.rows() != sh_rows) {
      throw ValidationError("inconsistent SH degree" + where);
    }
    if (g.feature.size() != feature_dim) {
      throw ValidationError("inconsistent feature dimension" + where);
    }
    if (g.rotation.norm() == 0.0) {
      throw ValidationError("zero quaternion" + where);
    }
  }
}

Eigen::AlignedBox3d GaussianCloud::bounds() const {
  Eigen::AlignedBox3d box;
  for (const auto& g : gaussians) {
    box.extend(g.center);
  }
  return box;
}

Vec2 CameraView::project(const Vec3& world) const {
  const Vec3 c = to_camera(world);
  return {fx() * c.x() / c.z() + cx(), fy() * c.y() / c.z() + cy()};
}

Vec3 CameraView::unproject(const Vec2& pixel, double depth) const {
  const Vec3 c{(pixel.x() - cx()) / fx() * depth, (pixel.y() - cy()) / fy() * depth, depth};
  return world_to_camera.inverse() * c;
}

void CameraView::validate() const {
  if (!(fx() > 0.0) || !(fy() > 0.0)) {
    throw ValidationError("camera '" + name + "': focal lengths must be positive");
  }
  if (width <= 0 || height <= 0) {
    throw ValidationError("camera '" + name + "': non-positive image size");
  }
  if (!image.empty() && (image.width != width || image.height != height)) {
    throw ValidationError("camera '" + name + "': image size does not match camera");
  }
  if (mask && (mask->width != width || mask->height != height)) {
    throw ValidationError("camera '" + name + "': mask size does not match camera");
  }
}

std::string to_string(PropertyKind kind) {
  switch (kind) {
    case PropertyKind::Density: return "density";
    case PropertyKind::YoungsModulus: return "youngs_modulus";
    case PropertyKind::Hardness: return "hardness";
    case PropertyKind::Friction: return "friction";
  }
  return "density";
}

PropertyKind property_kind_from_string(const std::string& name) {
  std::string n = name;
  std::transform(n.begin(), n.end(), n.begin(), [](unsigned char c) { return std::tolower(c); });
  if (n == "density") return PropertyKind::Density;
  if (n == "youngs_modulus" || n == "young's modulus" || n == "young_modulus" || n == "youngs modulus")
    return PropertyKind::YoungsModulus;
  if (n == "hardness") return PropertyKind::Hardness;
  if (n == "friction") return PropertyKind::Friction;
  throw ValidationError("unsupported property kind '" + name + "'");
}

std::string default_unit(PropertyKind kind) {
  switch (kind) {
    case PropertyKind::Density: return "kg/m^3";
    case PropertyKind::YoungsModulus: return "GPa";
    case PropertyKind::Hardness: return "Shore D";
    case PropertyKind::Friction: return "coefficient";
  }
  return "";
}

bool is_multiplicative(PropertyKind kind) {
  return kind == PropertyKind::Density || kind == PropertyKind::YoungsModulus;
}

CollapseRule default_collapse_rule(PropertyKind kind) {
  return kind == PropertyKind::YoungsModulus ? CollapseRule::GeometricMean : CollapseRule::Midpoint;
}

PropertyValue PropertyValue::range(double lo, double hi) {
  if (lo > hi) std::swap(lo, hi);
  return {ValueRange{lo, hi}};
}

double PropertyValue::min() const {
  return is_range() ? std::get<ValueRange>(value).lo : std::get<double>(value);
}

double PropertyValue::max() const {
  return is_range() ? std::get<ValueRange>(value).hi : std::get<double>(value);
}

double PropertyValue::collapse(CollapseRule rule) const {
  if (!is_range()) return std::get<double>(value);
  const auto [lo, hi] = std::get<ValueRange>(value);
  if (rule == CollapseRule::GeometricMean) {
    if (lo <= 0.0) {
      throw ValidationError("geometric-mean collapse needs a positive range");
    }
    return std::sqrt(lo * hi);
  }
  return 0.5 * (lo + hi);
}

void MaterialDictionary::validate() const {
  if (entries.empty()) {
    throw ValidationError("material dictionary is empty");
  }
  std::set<std::string> names;
  for (const auto& e : entries) {
    if (e.name.empty()) throw ValidationError("material with empty name");
    if (!names.insert(e.name).second) {
      throw ValidationError("duplicate material '" + e.name + "'");
    }
    if (!std::isfinite(e.value.min()) || !std::isfinite(e.value.max())) {
      throw ValidationError("material '" + e.name + "': non-finite value");
    }
    if (e.value.min() > e.value.max()) {
      throw ValidationError("material '" + e.name + "': range lo > hi");
    }
    if (is_multiplicative(kind) && e.value.min() <= 0.0) {
      throw ValidationError("material '" + e.name + "': " + to_string(kind) + " must be positive");
    }
    if (e.thickness_m && !(*e.thickness_m > 0.0)) {
      throw ValidationError("material '" + e.name + "': thickness must be positive");
    }
  }
  if (pure_volume_m3 && !(*pure_volume_m3 > 0.0)) {
    throw ValidationError("pure volume must be positive");
  }
}

std::vector<double> MaterialDictionary::collapsed(CollapseRule rule) const {
  std::vector<double> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.value.collapse(rule));
  return out;
}

}  // namespace pugs
