#pragma once

#include <cmath>
#include <optional>

namespace vpx {

// Millimeters, camera frame: x right, y down, z forward (optical axis).
struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  Vec3 normalized() const;
};

struct Vec2 {
  double u = 0.0, v = 0.0;
};

// Pinhole model without distortion; units are pixels (f, c) and mm (z).
struct CameraIntrinsics {
  double fx = 285.71, fy = 285.71;
  double cx = 0.0, cy = 0.0;
};

// Pixel + depth to camera-frame mm. Depth must be positive.
Vec3 backproject(double u, double v, double z_mm, const CameraIntrinsics& cam);

// Camera-frame mm to pixel coordinates. Points behind the camera are rejected.
Vec2 project(const Vec3& p, const CameraIntrinsics& cam);

// Maps metric depth onto a fixed grid of bins around a reference depth.
// Bin b covers [reference + (b - center)*bin, reference + (b - center + 1)*bin)
// with center = num_bins / 2, so the reference depth itself lands at the
// start of the center bin.
struct DepthDiscretization {
  double reference_z = 0.0;
  double bin_size_mm = 15.0;
  int num_bins = 40;

  int center_bin() const { return num_bins / 2; }
};

// Bin index for a depth, or nullopt when it falls outside the grid.
std::optional<int> discretize_depth(double z_mm, const DepthDiscretization& d);

// Metric depth of a bin's center; the inverse of discretize_depth up to
// half a bin. Out-of-range bins are rejected.
double bin_to_depth(int bin, const DepthDiscretization& d);

}  // namespace vpx
