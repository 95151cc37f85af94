#include "pugs/render/sh.hpp"

#include <algorithm>

namespace pugs::render {

namespace {

constexpr double kC0 = 0.28209479177387814;
constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005, -1.0925484305920792,
                          0.5462742152960396};
constexpr double kC3[] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658, 0.3731763325901154,
                          -0.4570457994644658, 1.445305721320277,  -0.5900435899266435};

}  // namespace

Vec3 evaluate_sh(const Eigen::MatrixX3d& coeffs, int degree, const Vec3& direction) {
  Eigen::RowVector3d c = kC0 * coeffs.row(0);
  if (degree >= 1) {
    const double x = direction.x(), y = direction.y(), z = direction.z();
    c += -kC1 * y * coeffs.row(1) + kC1 * z * coeffs.row(2) - kC1 * x * coeffs.row(3);
    if (degree >= 2) {
      const double xx = x * x, yy = y * y, zz = z * z, xy = x * y, yz = y * z, xz = x * z;
      c += kC2[0] * xy * coeffs.row(4) + kC2[1] * yz * coeffs.row(5) +
           kC2[2] * (2.0 * zz - xx - yy) * coeffs.row(6) + kC2[3] * xz * coeffs.row(7) +
           kC2[4] * (xx - yy) * coeffs.row(8);
      if (degree >= 3) {
        c += kC3[0] * y * (3.0 * xx - yy) * coeffs.row(9) + kC3[1] * xy * z * coeffs.row(10) +
             kC3[2] * y * (4.0 * zz - xx - yy) * coeffs.row(11) +
             kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy) * coeffs.row(12) +
             kC3[4] * x * (4.0 * zz - xx - yy) * coeffs.row(13) + kC3[5] * z * (xx - yy) * coeffs.row(14) +
             kC3[6] * x * (xx - 3.0 * yy) * coeffs.row(15);
      }
    }
  }
  Vec3 rgb = c.transpose().array() + 0.5;
  return rgb.cwiseMax(0.0).cwiseMin(1.0);
}

Vec3 rgb_to_sh_dc(const Vec3& rgb) { return (rgb.array() - 0.5) / kC0; }

}  // namespace pugs::render
