#pragma once

#include "pugs/core/types.hpp"
#include "pugs/render/rasterizer.hpp"

#include <nlohmann/json.hpp>

#include <span>

namespace pugs::loss {

struct LossWeights {
  double lambda_ssim = 0.2;
  double lambda_geo = 0.05;
  double lambda_sparse = 0.001;

  void validate() const;
  /// The "w/o GARL" ablation: geometry and sparse terms switched off.
  LossWeights without_garl() const;
};

/// How the normalized image gradient weights the depth/normal consistency term.
enum class EdgeWeightMode {
  AsPrinted,  // |grad I|^5, edges weigh most
  Inverted,   // (1 - |grad I|)^5, flat regions weigh most
};

EdgeWeightMode edge_weight_mode_from_string(const std::string& s);
std::string to_string(EdgeWeightMode mode);

/// Mean absolute difference over all samples.
double l1_loss(const ImageF& a, const ImageF& b);

/// Mean SSIM with an 11x11 Gaussian window (sigma 1.5), zero padding, averaged over channels.
double ssim(const ImageF& a, const ImageF& b);

/// (1 - lambda) L1 + lambda (1 - SSIM).
double photometric_loss(const ImageF& rendered, const ImageF& target, double lambda_ssim);

/// Sobel magnitude of luminance (replicated border), divided by its maximum, to the 5th power.
/// Constant images give all zeros.
ImageF image_gradient_weight(const ImageF& image, EdgeWeightMode mode = EdgeWeightMode::AsPrinted);

/// Normals from the local plane of back-projected depth (camera space, unit, camera-facing).
/// Pixels with alpha < 0.5 or without valid neighbors are left at zero.
ImageF depth_normals(const render::RenderBuffers& buffers, const CameraView& view);

/// Mean over alpha-valid pixels of weight(p) * |N_d(p) - N(p)|_1, with N the composited normal.
/// Throws DegenerateError when fewer than 1% of the pixels are usable.
double geometry_loss(const render::RenderBuffers& buffers, const CameraView& view,
                     EdgeWeightMode mode = EdgeWeightMode::AsPrinted);

/// Same, with the image weight supplied by the caller.
double geometry_loss(const render::RenderBuffers& buffers, const CameraView& view, const ImageF& weight);

/// Mean of log(s) + log(1 - s) over activated opacities, clamped to [1e-6, 1 - 1e-6].
double sparse_loss(std::span<const double> opacities);
double sparse_loss(const GaussianCloud& cloud);

struct LossBreakdown {
  double photometric = 0.0;
  double geometry = 0.0;
  double sparse = 0.0;
  double total = 0.0;

  nlohmann::json to_json() const;
};

/// L = L_photometric + lambda_geo L_geo + lambda_sparse L_sparse for one view. The target image is view.image.
LossBreakdown total_loss(const render::RenderBuffers& buffers, const CameraView& view, const GaussianCloud& cloud,
                         const LossWeights& weights, EdgeWeightMode mode = EdgeWeightMode::AsPrinted);

}  // namespace pugs::loss
