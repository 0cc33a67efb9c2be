#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vpx/geometry.hpp"
#include "vpx/tensor.hpp"
#include "vpx/voxelize.hpp"

namespace vpx {

// One local window around a 2D joint estimate, with supervision for every
// joint of the figure. gt_voxel holds continuous grid coordinates (x, y in
// cells, z in full-range bins); gt_in_window says whether the rounded
// coordinate lands inside the full grid.
struct CropRecord {
  int frame_id = 0;
  int joint_id = 0;
  int center_u = 0, center_v = 0;
  double reference_z = 0.0;
  bool anchor_fallback = false;  // reference depth borrowed from the torso
  Tensor column_bins;            // (X, Y), occupied bin index or -1
  Tensor patch;                  // (X, Y) normalized depth window, flat input
  std::vector<std::array<double, 3>> gt_voxel;
  std::vector<std::uint8_t> gt_in_window;
};

struct CropSet {
  std::string profile = "paper";
  int num_joints = 0;
  int grid_xy = 0;
  int grid_bins = 0;
  double bin_size_mm = 25.0;
  CameraIntrinsics intrinsics;
  std::vector<std::string> joint_names;
  std::vector<CropRecord> records;
};

// Grid placement implied by a record.
CropFrame crop_frame(const CropSet& set, const CropRecord& rec);

// Directory layout: crops.json (meta plus per-record scalars) and crops.tdf
// ("NNNNNN.bins" and "NNNNNN.patch" per record, indexed by position).
void save_cropset(const std::string& dir, const CropSet& set);
CropSet load_cropset(const std::string& dir);

}  // namespace vpx
