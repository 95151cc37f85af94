#pragma once

#include "pugs/core/types.hpp"

namespace pugs::render {

/// Evaluates real spherical harmonics (degree 0..3) in the 3DGS convention, including the +0.5 offset.
/// `direction` is the unit vector from the camera center to the Gaussian. Result is clamped to [0, 1].
Vec3 evaluate_sh(const Eigen::MatrixX3d& coeffs, int degree, const Vec3& direction);

/// DC coefficient that produces `rgb` when evaluated (inverse of the degree-0 term).
Vec3 rgb_to_sh_dc(const Vec3& rgb);

}  // namespace pugs::render
