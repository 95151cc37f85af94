#pragma once

#include "pugs/core/ply.hpp"
#include "pugs/core/types.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace pugs::eval {

/// Fixed color for a material id; ids beyond the base table follow a golden-ratio hue walk.
Vec3 palette_color(int material_id);

/// Copy of `cloud` with degree-0 colors set from the palette.
GaussianCloud colorize(const GaussianCloud& cloud, const std::vector<std::int32_t>& material_ids);

/// Writes `segmentation.ply` and one `segmentation_{view}.png` render per view into `out_dir`.
void material_segmentation_export(const GaussianCloud& cloud, const std::vector<std::int32_t>& material_ids,
                                  const std::vector<CameraView>& views, const std::filesystem::path& out_dir);

}  // namespace pugs::eval
