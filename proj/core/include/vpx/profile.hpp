#pragma once

#include <string>

#include "vpx/common.hpp"

namespace vpx {

// Resolution tier. "paper" matches the published geometry; "tiny" scales
// every spatial knob down so the full two-stage pipeline trains in minutes
// on a laptop CPU while exercising identical code paths.
struct Profile {
  std::string name = "paper";

  // 2D stage. The stored frame is pnet_input + pnet_margin on each side and
  // training crops a pnet_input square out of it; heatmaps are predicted at
  // 1/heatmap_stride of the crop.
  int pnet_input = 256;
  int pnet_margin = 32;
  int heatmap_stride = 4;
  int stem_channels = 64;
  int hourglass_width = 128;
  int hourglass_depth = 3;
  double sigma2d = 5.0;

  // 3D stage. Columns are discretized into grid_bins depth bins; training
  // and inference feed a contiguous window of grid_crop_bins of them.
  int grid_xy = 32;
  int grid_bins = 40;
  int grid_crop_bins = 36;
  double bin_size_mm = 25.0;
  double sigma3d = 1.0;
  int vnet_div = 1;  // divides the published channel widths

  // Whole-frame variant: the frame is downscaled to holistic_xy pixels and
  // voxelized at full depth range.
  int holistic_xy = 128;

  // Synthetic camera and scene.
  int synth_dims = 288;  // pnet_input + pnet_margin
  double synth_focal = 285.71;
  double bone_scale = 1.0;
  double depth_min_mm = 2500.0;
  double depth_max_mm = 3300.0;
  double noise_sigma_mm = 2.5;

  int depth_crop_margin() const { return (grid_bins - grid_crop_bins) / 2; }

  static Profile paper();
  static Profile tiny();
  static Profile by_name(const std::string& name);
};

}  // namespace vpx
