#pragma once

#include "pugs/core/types.hpp"

#include <filesystem>
#include <vector>

namespace pugs {

/// Loads calibrated views from either
///  - a COLMAP text model directory (cameras.txt + images.txt; quaternions w,x,y,z, world->camera), or
///  - a JSON transforms file with 4x4 camera-to-world matrices.
/// Only PINHOLE / SIMPLE_PINHOLE intrinsics are accepted. Image pixels are not loaded.
std::vector<CameraView> load_cameras(const std::filesystem::path& path);

std::vector<CameraView> load_colmap_text(const std::filesystem::path& dir);
std::vector<CameraView> load_transforms_json(const std::filesystem::path& file);

/// Writes views as a transforms JSON (OpenCV axes).
void save_transforms_json(const std::filesystem::path& file, const std::vector<CameraView>& views);

}  // namespace pugs
