#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "vpx/geometry.hpp"
#include "vpx/tensor.hpp"

namespace vpx {

// Single depth frame. depth_mm and valid are row-major (v * width + u);
// a pixel with valid == 0 carries no depth reading.
struct DepthMap {
  int width = 0, height = 0;
  CameraIntrinsics intrinsics;
  std::vector<float> depth_mm;
  std::vector<std::uint8_t> valid;

  void resize(int w, int h);
  bool in_bounds(int u, int v) const { return u >= 0 && u < width && v >= 0 && v < height; }
  bool is_valid(int u, int v) const { return in_bounds(u, v) && valid[std::size_t(v) * width + u]; }
  float at(int u, int v) const { return depth_mm[std::size_t(v) * width + u]; }
};

// Placement of a voxel grid inside a frame: pixel origin of the crop window
// plus the depth discretization anchored at the crop's reference depth.
// Voxel (x, y) covers pixel column (origin_u + x, origin_v + y); its world
// position is taken at the pixel center and the depth bin center.
struct CropFrame {
  int origin_u = 0, origin_v = 0;
  int dim_x = 0, dim_y = 0;
  DepthDiscretization depth;
  CameraIntrinsics intrinsics;
};

Vec3 voxel_to_world(const CropFrame& frame, int x, int y, int z);
// Continuous variant for sub-voxel coordinates; z may be fractional bins.
Vec3 voxel_to_world_f(const CropFrame& frame, double x, double y, double z);

// Occupancy values are +1 where the pixel's discretized depth matches the
// voxel's bin and -1 everywhere else; columns for invalid or out-of-image
// pixels are all -1. values has shape (dim_x, dim_y, num_bins).
struct OccupancyGrid {
  Tensor values;
  CropFrame frame;
};

// Median of valid depths in the 5x5 neighborhood of (u, v); nullopt when the
// neighborhood holds no valid reading (the joint is unanchorable there).
std::optional<double> estimate_reference_depth(const DepthMap& map, int u, int v);

// Builds the grid for a window of dim_x x dim_y pixels centered at
// (center_u, center_v) (origin = center - dim/2) with num_bins depth bins of
// bin_size_mm around reference_z.
OccupancyGrid build_local_grid(const DepthMap& map, int center_u, int center_v,
                               double reference_z, int dim_x, int dim_y, int num_bins,
                               double bin_size_mm);

// Compact (dim_x, dim_y) map of each column's occupied bin, -1 for empty
// columns. Expanding it with grid_from_column_bins reproduces the full grid.
Tensor column_bin_map(const OccupancyGrid& grid);
OccupancyGrid grid_from_column_bins(const Tensor& bins, const CropFrame& frame);

}  // namespace vpx
