#pragma once

#include "pugs/core/types.hpp"

#include <filesystem>

namespace pugs {

/// 8- or 16-bit PNG (gray, gray+alpha, RGB, RGBA) to RGB in [0, 1]; alpha is dropped.
ImageF load_png_rgb(const std::filesystem::path& path);
/// Writes 1- or 3-channel images as 8-bit PNG, clamping to [0, 1].
void save_png(const std::filesystem::path& path, const ImageF& image);

/// Single-channel 8- or 16-bit PNG; 8-bit ids are widened.
MaskMap load_mask_png(const std::filesystem::path& path);
void save_mask_png(const std::filesystem::path& path, const MaskMap& mask);
/// Loads a mask and checks it against the view resolution.
MaskMap load_mask_map(const std::filesystem::path& path, const CameraView& view);

/// Portable float map, 1 or 3 channels, little-endian, bottom-to-top rows.
void save_pfm(const std::filesystem::path& path, const ImageF& image);
ImageF load_pfm(const std::filesystem::path& path);

}  // namespace pugs
