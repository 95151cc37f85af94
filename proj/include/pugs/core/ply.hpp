#pragma once

#include "pugs/core/types.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace pugs {

/// Additional per-vertex column carried next to the standard 3DGS fields.
struct PlyColumn {
  std::string name;
  std::vector<double> values;
  bool integer = false;  // int32 when true, float32 otherwise
};

/// Reads a binary little-endian 3DGS PLY. Values are stored raw (no activation).
/// Columns that are not part of the 3DGS layout are returned through `extras`.
GaussianCloud load_gaussian_ply(const std::filesystem::path& path,
                                std::vector<PlyColumn>* extras = nullptr);

/// Writes the standard layout (x y z nx ny nz f_dc f_rest opacity scale rot feature_*)
/// followed by any extra columns.
void save_gaussian_ply(const std::filesystem::path& path, const GaussianCloud& cloud,
                       const std::vector<PlyColumn>& extras = {});

}  // namespace pugs
