#include "pugs/mass/volume.hpp"

#include "pugs/core/error.hpp"

#include <array>
#include <cmath>
#include <set>

namespace pugs::mass {

void CompensatedSum::add(double x) {
  const double t = sum_ + x;
  if (std::abs(sum_) >= std::abs(x)) {
    compensation_ += (sum_ - t) + x;
  } else {
    compensation_ += (x - t) + sum_;
  }
  sum_ = t;
}

double ellipsoid_volume(const Gaussian& g, double k_sigma) {
  if (!(k_sigma > 0.0)) throw ValidationError("k_sigma must be positive");
  const Vec3 s = g.scale();
  return 4.0 / 3.0 * M_PI * (k_sigma * s.x()) * (k_sigma * s.y()) * (k_sigma * s.z());
}

double gaussian_volume(const Gaussian& g, double k_sigma) { return ellipsoid_volume(g, k_sigma) * g.opacity(); }

Integral integrate_object(const GaussianCloud& cloud, std::span<const double> property, double k_sigma) {
  if (cloud.empty()) throw ValidationError("cannot integrate an empty cloud");
  if (property.size() != cloud.size()) throw ValidationError("one property value per Gaussian is required");
  CompensatedSum m_hat, c;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const double w = gaussian_volume(cloud.gaussians[i], k_sigma);
    m_hat.add(w * property[i]);
    c.add(w);
  }
  return {m_hat.value(), c.value()};
}

double pure_volume_correction(double m_hat, double c, double v) {
  if (c == 0.0) throw DegenerateError("total Gaussian volume is zero");
  if (!(c > 0.0)) throw ValidationError("total Gaussian volume must be positive");
  if (!(v > 0.0)) throw ValidationError("pure volume must be positive");
  return v * (m_hat / c);
}

std::size_t occupied_voxels(const GaussianCloud& cloud, double voxel_size) {
  if (!(voxel_size > 0.0)) throw ValidationError("voxel_size must be positive");
  if (cloud.empty()) throw ValidationError("cannot voxelize an empty cloud");
  const Vec3 origin = cloud.bounds().min();
  std::set<std::array<long long, 3>> cells;
  for (const auto& g : cloud.gaussians) {
    const Vec3 r = (g.center - origin) / voxel_size;
    cells.insert({static_cast<long long>(std::floor(r.x() + 1e-9)), static_cast<long long>(std::floor(r.y() + 1e-9)),
                  static_cast<long long>(std::floor(r.z() + 1e-9))});
  }
  return cells.size();
}

ThicknessResult thickness_baseline(const GaussianCloud& cloud, double voxel_size, std::span<const double> property,
                                   std::span<const double> thickness) {
  if (property.empty()) throw ValidationError("thickness integration needs at least one source point");
  if (property.size() != thickness.size()) throw ValidationError("one thickness per source point is required");
  ThicknessResult r;
  r.occupied_voxels = occupied_voxels(cloud, voxel_size);
  r.area = kSurfaceVoxelFactor * static_cast<double>(r.occupied_voxels) * voxel_size * voxel_size;
  const double share = r.area / static_cast<double>(property.size());
  CompensatedSum sum;
  for (std::size_t s = 0; s < property.size(); ++s) {
    if (!(thickness[s] > 0.0)) throw ValidationError("thickness must be positive");
    sum.add(share * thickness[s] * property[s]);
  }
  r.m_hat = sum.value();
  return r;
}

}  // namespace pugs::mass
