#include "vpx/voxelize.hpp"

#include <algorithm>
#include <string>

#include "vpx/common.hpp"

namespace vpx {

void DepthMap::resize(int w, int h) {
  check(w > 0 && h > 0, "depth map extents must be positive");
  width = w;
  height = h;
  depth_mm.assign(std::size_t(w) * h, 0.0f);
  valid.assign(std::size_t(w) * h, 0);
}

Vec3 voxel_to_world(const CropFrame& frame, int x, int y, int z) {
  check(x >= 0 && x < frame.dim_x && y >= 0 && y < frame.dim_y,
        "voxel (" + std::to_string(x) + "," + std::to_string(y) + ") outside grid (" +
            std::to_string(frame.dim_x) + "," + std::to_string(frame.dim_y) + ")");
  const double depth = bin_to_depth(z, frame.depth);
  return backproject(frame.origin_u + x + 0.5, frame.origin_v + y + 0.5, depth,
                     frame.intrinsics);
}

Vec3 voxel_to_world_f(const CropFrame& frame, double x, double y, double z) {
  const double depth =
      frame.depth.reference_z + (z - frame.depth.center_bin() + 0.5) * frame.depth.bin_size_mm;
  return backproject(frame.origin_u + x + 0.5, frame.origin_v + y + 0.5, depth,
                     frame.intrinsics);
}

std::optional<double> estimate_reference_depth(const DepthMap& map, int u, int v) {
  std::vector<float> vals;
  vals.reserve(25);
  for (int dv = -2; dv <= 2; ++dv) {
    for (int du = -2; du <= 2; ++du) {
      const int uu = u + du, vv = v + dv;
      if (map.is_valid(uu, vv)) vals.push_back(map.at(uu, vv));
    }
  }
  if (vals.empty()) return std::nullopt;
  std::sort(vals.begin(), vals.end());
  // Lower median for even counts; any fixed choice works, this one is cheap.
  return static_cast<double>(vals[(vals.size() - 1) / 2]);
}

OccupancyGrid build_local_grid(const DepthMap& map, int center_u, int center_v,
                               double reference_z, int dim_x, int dim_y, int num_bins,
                               double bin_size_mm) {
  check(dim_x > 0 && dim_y > 0 && num_bins > 0, "grid extents must be positive");
  OccupancyGrid grid;
  grid.frame.origin_u = center_u - dim_x / 2;
  grid.frame.origin_v = center_v - dim_y / 2;
  grid.frame.dim_x = dim_x;
  grid.frame.dim_y = dim_y;
  grid.frame.depth = DepthDiscretization{reference_z, bin_size_mm, num_bins};
  grid.frame.intrinsics = map.intrinsics;
  grid.values = Tensor({dim_x, dim_y, num_bins}, -1.0f);

  for (int x = 0; x < dim_x; ++x) {
    for (int y = 0; y < dim_y; ++y) {
      const int u = grid.frame.origin_u + x;
      const int v = grid.frame.origin_v + y;
      if (!map.is_valid(u, v)) continue;
      const auto bin = discretize_depth(map.at(u, v), grid.frame.depth);
      if (!bin) continue;
      grid.values.data[(std::size_t(x) * dim_y + y) * num_bins + *bin] = 1.0f;
    }
  }
  return grid;
}

Tensor column_bin_map(const OccupancyGrid& grid) {
  const int dx = grid.frame.dim_x, dy = grid.frame.dim_y, nb = grid.frame.depth.num_bins;
  check(grid.values.shape == std::vector<int>({dx, dy, nb}),
        "grid tensor shape " + shape_str(grid.values.shape) + " does not match its frame");
  Tensor bins({dx, dy}, -1.0f);
  for (int x = 0; x < dx; ++x) {
    for (int y = 0; y < dy; ++y) {
      const float* col = grid.values.ptr() + (std::size_t(x) * dy + y) * nb;
      for (int b = 0; b < nb; ++b) {
        if (col[b] > 0.0f) {
          bins.data[std::size_t(x) * dy + y] = static_cast<float>(b);
          break;
        }
      }
    }
  }
  return bins;
}

OccupancyGrid grid_from_column_bins(const Tensor& bins, const CropFrame& frame) {
  check(bins.shape == std::vector<int>({frame.dim_x, frame.dim_y}),
        "column map shape " + shape_str(bins.shape) + " does not match frame (" +
            std::to_string(frame.dim_x) + "," + std::to_string(frame.dim_y) + ")");
  OccupancyGrid grid;
  grid.frame = frame;
  grid.values = Tensor({frame.dim_x, frame.dim_y, frame.depth.num_bins}, -1.0f);
  for (int x = 0; x < frame.dim_x; ++x) {
    for (int y = 0; y < frame.dim_y; ++y) {
      const float bv = bins.data[std::size_t(x) * frame.dim_y + y];
      if (bv < 0.0f) continue;
      const int b = static_cast<int>(bv);
      check(b >= 0 && b < frame.depth.num_bins && bv == static_cast<float>(b),
            "column map holds a non-integral or out-of-range bin " + std::to_string(bv));
      grid.values.data[(std::size_t(x) * frame.dim_y + y) * frame.depth.num_bins + b] = 1.0f;
    }
  }
  return grid;
}

}  // namespace vpx
