#include <algorithm>
#include <cmath>
#include <cstring>

#include "vpx/common.hpp"
#include "vpx/heatmap.hpp"
#include "vpx/pipeline.hpp"

namespace vpx {

namespace {

float normalize_value(double z, double lo, double hi) {
  const double t = 2.0 * (z - lo) / (hi - lo) - 1.0;
  return static_cast<float>(std::clamp(t, -1.0, 1.0));
}

}  // namespace

Tensor normalized_depth_crop(const DepthMap& map, double z_min, double z_max, int origin_u,
                             int origin_v, int size) {
  check(z_max > z_min, "depth window is empty");
  check(size > 0, "crop size must be positive");
  Tensor out(std::vector<int>{1, size, size});
  float* o = out.ptr();
  for (int v = 0; v < size; ++v) {
    for (int u = 0; u < size; ++u) {
      const int su = origin_u + u, sv = origin_v + v;
      float val = -1.0f;
      if (map.is_valid(su, sv)) val = normalize_value(map.at(su, sv), z_min, z_max);
      o[std::size_t(v) * size + u] = val;
    }
  }
  return out;
}

Tensor normalized_patch(const DepthMap& map, int center_u, int center_v, int size,
                        double reference_z, int num_bins, double bin_size_mm) {
  check(size > 0 && num_bins > 0 && bin_size_mm > 0, "patch geometry must be positive");
  const double half = (num_bins / 2) * bin_size_mm;
  const int origin_u = center_u - size / 2, origin_v = center_v - size / 2;
  Tensor out(std::vector<int>{size, size});
  float* o = out.ptr();
  for (int x = 0; x < size; ++x) {
    for (int y = 0; y < size; ++y) {
      const int su = origin_u + x, sv = origin_v + y;
      float val = -1.0f;
      if (map.is_valid(su, sv))
        val = static_cast<float>(std::clamp((map.at(su, sv) - reference_z) / half, -1.0, 1.0));
      o[std::size_t(x) * size + y] = val;
    }
  }
  return out;
}

Tensor pnet_target(const std::vector<JointGT>& joints, const Profile& p, int origin_u,
                   int origin_v) {
  const int J = static_cast<int>(joints.size());
  check(J > 0, "no joints to build targets for");
  const int s = p.heatmap_stride;
  const int hw = p.pnet_input / s;
  check(hw * s == p.pnet_input, "heatmap stride does not divide the crop size");
  Tensor out(std::vector<int>{J, hw, hw});
  const std::size_t per = std::size_t(hw) * hw;
  for (int j = 0; j < J; ++j) {
    const double u = (joints[j].pixel.u - origin_u) / s - 0.5;
    const double v = (joints[j].pixel.v - origin_v) / s - 0.5;
    const Tensor ch = gaussian_target_2d(u, v, hw, hw, p.sigma2d);
    std::memcpy(out.ptr() + j * per, ch.ptr(), per * sizeof(float));
  }
  return out;
}

Tensor crop_window(const CropRecord& rec, int offset, const Profile& p) {
  const int X = p.grid_xy, C = p.grid_crop_bins;
  check(rec.column_bins.shape == std::vector<int>({X, X}),
        "record grid does not match the profile");
  check(offset >= 0 && offset + C <= p.grid_bins, "depth window offset out of range");
  Tensor out(std::vector<int>{1, X, X, C});
  std::fill(out.data.begin(), out.data.end(), -1.0f);
  const float* bins = rec.column_bins.ptr();
  float* o = out.ptr();
  for (int x = 0; x < X; ++x) {
    for (int y = 0; y < X; ++y) {
      const int b = static_cast<int>(bins[std::size_t(x) * X + y]);
      const int w = b - offset;
      if (b >= 0 && w >= 0 && w < C) o[(std::size_t(x) * X + y) * C + w] = 1.0f;
    }
  }
  return out;
}

CropFrame window_frame(const CropFrame& full, int offset, int crop_bins) {
  check(crop_bins >= 1 && offset >= 0 && offset + crop_bins <= full.depth.num_bins,
        "depth window does not fit the grid");
  CropFrame w = full;
  // Window bin b is full bin b + offset; shifting the reference keeps
  // bin_to_depth identical across the two indexings.
  w.depth.reference_z =
      full.depth.reference_z +
      (offset + crop_bins / 2 - full.depth.center_bin()) * full.depth.bin_size_mm;
  w.depth.num_bins = crop_bins;
  return w;
}

Tensor vnet_target(const CropRecord& rec, int offset, int num_joints, const Profile& p) {
  const int X = p.grid_xy, C = p.grid_crop_bins;
  check(static_cast<int>(rec.gt_voxel.size()) == num_joints,
        "record supervision does not cover every joint");
  Tensor out(std::vector<int>{num_joints, X, X, C});
  const std::size_t per = std::size_t(X) * X * C;
  for (int j = 0; j < num_joints; ++j) {
    const auto& g = rec.gt_voxel[j];
    const Tensor ch = gaussian_target_3d(g[0], g[1], g[2] - offset, X, X, C, p.sigma3d);
    std::memcpy(out.ptr() + j * per, ch.ptr(), per * sizeof(float));
  }
  return out;
}

Tensor vl2d_target(const CropRecord& rec, int offset, int num_joints, const Profile& p) {
  const int X = p.grid_xy, C = p.grid_crop_bins;
  check(static_cast<int>(rec.gt_voxel.size()) == num_joints,
        "record supervision does not cover every joint");
  Tensor out(std::vector<int>{num_joints * C, X, X});
  const std::size_t plane = std::size_t(X) * X;
  for (int j = 0; j < num_joints; ++j) {
    const auto& g = rec.gt_voxel[j];
    const Tensor ch = gaussian_target_3d(g[0], g[1], g[2] - offset, X, X, C, p.sigma3d);
    const float* src = ch.ptr();
    for (int d = 0; d < C; ++d) {
      float* dst = out.ptr() + (std::size_t(j) * C + d) * plane;
      for (int x = 0; x < X; ++x)
        for (int y = 0; y < X; ++y) dst[std::size_t(x) * X + y] = src[(std::size_t(x) * X + y) * C + d];
    }
  }
  return out;
}

Tensor co2d_target(const CropRecord& rec, int num_joints, const Profile& p) {
  const int X = p.grid_xy, D = p.grid_bins;
  check(static_cast<int>(rec.gt_voxel.size()) == num_joints,
        "record supervision does not cover every joint");
  Tensor out(std::vector<int>{num_joints * 3});
  for (int j = 0; j < num_joints; ++j) {
    const auto& g = rec.gt_voxel[j];
    const double hx = X / 2.0, hd = D / 2.0;
    const double vals[3] = {(g[0] + 0.5 - hx) / hx, (g[1] + 0.5 - hx) / hx,
                            (g[2] + 0.5 - hd) / hd};
    for (int a = 0; a < 3; ++a)
      out.data[std::size_t(j) * 3 + a] = static_cast<float>(std::clamp(vals[a], -1.5, 1.5));
  }
  return out;
}

Split split_frames(int count, double validation_fraction, std::uint64_t seed) {
  check(count > 0, "cannot split an empty dataset");
  check(validation_fraction >= 0.0 && validation_fraction < 1.0,
        "validation fraction must be in [0, 1)");
  std::vector<int> order(count);
  for (int i = 0; i < count; ++i) order[i] = i;
  Rng rng = Rng(seed).fork(0x5911);
  for (int i = count - 1; i > 0; --i) {
    const int k = static_cast<int>(rng.uniform_int(i + 1));
    std::swap(order[i], order[k]);
  }
  int val = static_cast<int>(validation_fraction * count);
  if (val >= count) val = count - 1;
  Split s;
  s.validation.assign(order.begin(), order.begin() + val);
  s.train.assign(order.begin() + val, order.end());
  return s;
}

}  // namespace vpx
