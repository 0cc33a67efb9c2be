#pragma once

#include <string>
#include <vector>

#include "vpx/tensor.hpp"

namespace vpx {

// Unnormalized Gaussian targets: value exp(-dist^2 / (2 sigma^2)), peak 1 at
// the joint location. Coordinates are in cell units of the produced grid.
// 2D channels are (H, W) indexed [v][u]; 3D channels are (X, Y, D).
Tensor gaussian_target_2d(double u, double v, int width, int height, double sigma);
Tensor gaussian_target_3d(double x, double y, double z, int dim_x, int dim_y, int dim_d,
                          double sigma);

struct Peak {
  std::vector<int> index;  // one entry per axis of the channel
  float value = 0.0f;
};

// Location of the maximum of a single channel; ties resolve to the lowest
// flat (row-major) index, so an all-constant channel decodes to the origin.
Peak decode_argmax(const Tensor& channel);

// 8-bit grayscale dump of a 2D channel for eyeballing; values are clamped
// to [0,1] and scaled to 255.
void write_pgm(const std::string& path, const Tensor& channel);

}  // namespace vpx
