#include "vpx/geometry.hpp"

#include <string>

#include "vpx/common.hpp"

namespace vpx {

Vec3 Vec3::normalized() const {
  const double n = norm();
  check(n > 0.0, "cannot normalize a zero vector");
  return {x / n, y / n, z / n};
}

Vec3 backproject(double u, double v, double z_mm, const CameraIntrinsics& cam) {
  check(z_mm > 0.0, "backproject needs positive depth, got " + std::to_string(z_mm));
  check(cam.fx > 0.0 && cam.fy > 0.0, "camera focal lengths must be positive");
  return {(u - cam.cx) * z_mm / cam.fx, (v - cam.cy) * z_mm / cam.fy, z_mm};
}

Vec2 project(const Vec3& p, const CameraIntrinsics& cam) {
  check(p.z > 0.0, "cannot project a point with non-positive depth " + std::to_string(p.z));
  check(cam.fx > 0.0 && cam.fy > 0.0, "camera focal lengths must be positive");
  return {cam.fx * p.x / p.z + cam.cx, cam.fy * p.y / p.z + cam.cy};
}

std::optional<int> discretize_depth(double z_mm, const DepthDiscretization& d) {
  check(d.bin_size_mm > 0.0, "bin size must be positive");
  check(d.num_bins > 0, "bin count must be positive");
  const int bin =
      static_cast<int>(std::floor((z_mm - d.reference_z) / d.bin_size_mm)) + d.center_bin();
  if (bin < 0 || bin >= d.num_bins) return std::nullopt;
  return bin;
}

double bin_to_depth(int bin, const DepthDiscretization& d) {
  check(d.bin_size_mm > 0.0, "bin size must be positive");
  check(bin >= 0 && bin < d.num_bins, "bin " + std::to_string(bin) + " out of range [0," +
                                          std::to_string(d.num_bins) + ")");
  return d.reference_z + (bin - d.center_bin() + 0.5) * d.bin_size_mm;
}

}  // namespace vpx
