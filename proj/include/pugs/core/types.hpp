#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace pugs {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;

double sigmoid(double x);
double logit(double p);

/// One anisotropic 3D Gaussian, stored pre-activation as in the 3DGS PLY layout.
struct Gaussian {
  Vec3 center = Vec3::Zero();
  /// Raw quaternion (w, x, y, z); normalized at use sites.
  Vec4 rotation{1.0, 0.0, 0.0, 0.0};
  Vec3 log_scale = Vec3::Zero();
  double opacity_logit = 0.0;
  /// Spherical-harmonic coefficients, (degree+1)^2 rows of RGB; row 0 is the DC term.
  Eigen::MatrixX3d sh = Eigen::MatrixX3d::Zero(1, 3);
  /// Region-aware feature; empty when absent.
  VecX feature;

  double opacity() const { return sigmoid(opacity_logit); }
  Vec3 scale() const { return log_scale.array().exp(); }
  Mat3 rotation_matrix() const;
  /// R S S^T R^T
  Mat3 covariance() const;
};

struct GaussianCloud {
  std::vector<Gaussian> gaussians;
  int sh_degree = 0;
  int feature_dim = 0;

  std::size_t size() const { return gaussians.size(); }
  bool empty() const { return gaussians.empty(); }

  /// Checks the shared SH degree / feature dimension and the activation invariants.
  void validate() const;
  /// Axis-aligned bounds of the centers.
  Eigen::AlignedBox3d bounds() const;
};

/// Interleaved row-major float image.
template <typename T>
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, int c, T fill = T{})
      : width(w), height(h), channels(c), data(static_cast<std::size_t>(w) * h * c, fill) {}

  bool empty() const { return data.empty(); }
  std::size_t index(int x, int y, int c = 0) const {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  T& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
  const T& at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }
};

using ImageF = Image<double>;
/// Per-pixel mask ids; 0 marks unassigned pixels.
using MaskMap = Image<std::uint16_t>;

struct CameraView {
  std::string name;
  /// Image file as referenced by the camera file (relative to the object directory).
  std::string image_file;
  Mat3 intrinsics = Mat3::Identity();
  Eigen::Isometry3d world_to_camera = Eigen::Isometry3d::Identity();
  int width = 0;
  int height = 0;
  /// RGB in [0, 1]; may be empty for render-only views.
  ImageF image;
  std::optional<MaskMap> mask;

  double fx() const { return intrinsics(0, 0); }
  double fy() const { return intrinsics(1, 1); }
  double cx() const { return intrinsics(0, 2); }
  double cy() const { return intrinsics(1, 2); }

  Vec3 to_camera(const Vec3& world) const { return world_to_camera * world; }
  /// Continuous pixel coordinates of a world point (pixel centers at +0.5).
  Vec2 project(const Vec3& world) const;
  /// Inverse of project for a camera-space depth.
  Vec3 unproject(const Vec2& pixel, double depth) const;
  Vec3 camera_center() const { return world_to_camera.inverse().translation(); }

  void validate() const;
};

enum class PropertyKind { Density, YoungsModulus, Hardness, Friction };

std::string to_string(PropertyKind kind);
PropertyKind property_kind_from_string(const std::string& name);
/// Canonical unit for each kind ("kg/m^3", "GPa", ...).
std::string default_unit(PropertyKind kind);
/// Density and Young's modulus must be strictly positive.
bool is_multiplicative(PropertyKind kind);

enum class CollapseRule { Midpoint, GeometricMean };

CollapseRule default_collapse_rule(PropertyKind kind);

struct ValueRange {
  double lo = 0.0;
  double hi = 0.0;
};

/// Either a point value or a closed range.
struct PropertyValue {
  std::variant<double, ValueRange> value;

  static PropertyValue point(double v) { return {v}; }
  static PropertyValue range(double lo, double hi);

  bool is_range() const { return std::holds_alternative<ValueRange>(value); }
  double min() const;
  double max() const;
  double collapse(CollapseRule rule) const;
};

struct MaterialEntry {
  std::string name;
  PropertyValue value;
  /// Optional per-material shell thickness in meters (thickness integration only).
  std::optional<double> thickness_m;
};

struct MaterialDictionary {
  PropertyKind kind = PropertyKind::Density;
  std::string unit = "kg/m^3";
  std::vector<MaterialEntry> entries;
  std::optional<double> pure_volume_m3;
  std::string description;

  std::size_t size() const { return entries.size(); }
  void validate() const;
  /// Scalar y_k for every entry.
  std::vector<double> collapsed(CollapseRule rule) const;
  std::vector<double> collapsed() const { return collapsed(default_collapse_rule(kind)); }
};

struct PatchEmbedding {
  VecX vector;
  std::string view;
  Eigen::Vector2i center = Eigen::Vector2i::Zero();
};

}  // namespace pugs
