#pragma once

#include "pugs/core/types.hpp"

#include <nlohmann/json.hpp>

#include <span>
#include <vector>

namespace pugs::mass {

/// Neumaier-compensated running sum.
class CompensatedSum {
public:
  void add(double x);
  double value() const { return sum_ + compensation_; }

private:
  double sum_ = 0.0;
  double compensation_ = 0.0;
};

/// (4/3) pi (k s_x)(k s_y)(k s_z): the k-sigma ellipsoid of one Gaussian.
double ellipsoid_volume(const Gaussian& g, double k_sigma = 1.0);

/// Opacity-weighted ellipsoid volume sigma * V.
double gaussian_volume(const Gaussian& g, double k_sigma = 1.0);

struct Integral {
  /// sum_i sigma_i V_i rho_i
  double m_hat = 0.0;
  /// sum_i sigma_i V_i
  double c = 0.0;
};

/// Object-level integral of a per-Gaussian property field.
Integral integrate_object(const GaussianCloud& cloud, std::span<const double> property, double k_sigma = 1.0);

/// m = v * m_hat / c. DegenerateError when c = 0.
double pure_volume_correction(double m_hat, double c, double v);

struct ThicknessResult {
  double m_hat = 0.0;
  /// Surface proxy (2/3) * occupied voxels * voxel_size^2.
  double area = 0.0;
  std::size_t occupied_voxels = 0;
};

/// Fraction of voxel face area per occupied voxel that estimates surface area: a randomly oriented plane
/// of area A meets 1.5 A / h^2 cubes of edge h on average.
inline constexpr double kSurfaceVoxelFactor = 2.0 / 3.0;

/// Surface-area times thickness integration over source points: each point takes an equal share of the
/// surface proxy of the cloud's occupied voxels, m_hat = sum_s area_s * t_s * rho_s.
ThicknessResult thickness_baseline(const GaussianCloud& cloud, double voxel_size, std::span<const double> property,
                                   std::span<const double> thickness);

/// Occupied voxel count of the Gaussian centers (cells anchored at the bounding-box minimum).
std::size_t occupied_voxels(const GaussianCloud& cloud, double voxel_size);

}  // namespace pugs::mass
