#include <algorithm>
#include <cmath>
#include <limits>

#include "vpx/common.hpp"
#include "vpx/synth.hpp"

namespace vpx {

namespace {

struct Primitive {
  Vec3 a, b;       // b == a for spheres
  double r = 0.0;
};

// Smallest positive ray parameter t with |t*d - closest(segment)| = r, for a
// ray from the origin with unnormalized direction d chosen so that d.z == 1;
// t is then the hit's depth directly. Returns +inf on miss.
double ray_capsule(const Vec3& d, const Primitive& c) {
  double best = std::numeric_limits<double>::infinity();
  auto sphere = [&](const Vec3& center) {
    const double dd = d.dot(d);
    const double dc = d.dot(center);
    const double disc = dc * dc - dd * (center.dot(center) - c.r * c.r);
    if (disc < 0.0) return;
    const double t = (dc - std::sqrt(disc)) / dd;
    if (t > 0.0 && t < best) best = t;
  };
  const Vec3 axis = c.b - c.a;
  const double len2 = axis.dot(axis);
  if (len2 > 1e-12) {
    const double inv_len = 1.0 / std::sqrt(len2);
    const Vec3 n{axis.x * inv_len, axis.y * inv_len, axis.z * inv_len};
    const Vec3 w = d - n * d.dot(n);
    const Vec3 q = (c.a * -1.0) + n * c.a.dot(n);
    const double A = w.dot(w);
    if (A > 1e-12) {
      const double B = 2.0 * w.dot(q);
      const double C = q.dot(q) - c.r * c.r;
      const double disc = B * B - 4.0 * A * C;
      if (disc >= 0.0) {
        const double t = (-B - std::sqrt(disc)) / (2.0 * A);
        if (t > 0.0) {
          const double s = (d * t - c.a).dot(n);
          if (s >= 0.0 && s <= std::sqrt(len2) && t < best) best = t;
        }
      }
    }
  }
  sphere(c.a);
  if (len2 > 1e-12) sphere(c.b);
  return best;
}

}  // namespace

RenderedFrame render_depth(const PoseSample& pose, const SkeletonModel& skel,
                           const CameraIntrinsics& cam, int width, int height,
                           double noise_sigma_mm, double dropout, Rng& rng) {
  check(width > 0 && height > 0, "render target extents must be positive");
  check(static_cast<int>(pose.world.size()) == skel.joint_count(),
        "pose joint count does not match the skeleton");
  check(noise_sigma_mm >= 0.0 && dropout >= 0.0 && dropout < 1.0,
        "noise sigma must be >= 0 and dropout in [0,1)");

  std::vector<Primitive> prims;
  for (int i = 0; i < skel.joint_count(); ++i) {
    const BoneSpec& b = skel.bones[i];
    if (b.parent >= 0 && b.radius_mm > 0.0) {
      prims.push_back({pose.world[b.parent], pose.world[i], b.radius_mm});
    }
    if (b.sphere_mm > 0.0) {
      prims.push_back({pose.world[i], pose.world[i], b.sphere_mm});
    }
  }

  RenderedFrame out;
  out.map.resize(width, height);
  out.map.intrinsics = cam;
  std::vector<double> zbuf(std::size_t(width) * height,
                           std::numeric_limits<double>::infinity());

  for (const Primitive& p : prims) {
    // Conservative pixel bounds from the projected endpoints.
    double u0 = 1e30, u1 = -1e30, v0 = 1e30, v1 = -1e30;
    for (const Vec3& e : {p.a, p.b}) {
      check(e.z - p.r > 1.0, "figure intersects the camera plane");
      const Vec2 px = project(e, cam);
      const double pad = p.r * std::max(cam.fx, cam.fy) / (e.z - p.r) + 1.5;
      u0 = std::min(u0, px.u - pad);
      u1 = std::max(u1, px.u + pad);
      v0 = std::min(v0, px.v - pad);
      v1 = std::max(v1, px.v + pad);
    }
    const int iu0 = std::max(0, static_cast<int>(std::floor(u0)));
    const int iu1 = std::min(width - 1, static_cast<int>(std::ceil(u1)));
    const int iv0 = std::max(0, static_cast<int>(std::floor(v0)));
    const int iv1 = std::min(height - 1, static_cast<int>(std::ceil(v1)));
    for (int v = iv0; v <= iv1; ++v) {
      for (int u = iu0; u <= iu1; ++u) {
        const Vec3 d{(u + 0.5 - cam.cx) / cam.fx, (v + 0.5 - cam.cy) / cam.fy, 1.0};
        const double t = ray_capsule(d, p);
        double& z = zbuf[std::size_t(v) * width + u];
        if (t < z) z = t;
      }
    }
  }

  // Visibility before noise: a joint is covered when the surface at its
  // pixel sits more than its own radius (plus slack) in front of it.
  const int j = skel.joint_count();
  out.occluded.assign(j, 0);
  out.pixel.resize(j);
  for (int i = 0; i < j; ++i) {
    const Vec2 px = project(pose.world[i], cam);
    out.pixel[i] = px;
    const int u = static_cast<int>(std::floor(px.u));
    const int v = static_cast<int>(std::floor(px.v));
    if (u < 0 || u >= width || v < 0 || v >= height) {
      out.occluded[i] = 1;
      continue;
    }
    const double z = zbuf[std::size_t(v) * width + u];
    const double limit = pose.world[i].z - skel.joint_surface_radius(i) - 5.0;
    out.occluded[i] = (std::isinf(z) || z < limit) ? 1 : 0;
  }

  // Sensor model: Gaussian depth noise plus sparse dropout. Draw order is
  // row-major over valid pixels, so frames are reproducible bit for bit.
  for (std::size_t i = 0; i < zbuf.size(); ++i) {
    if (std::isinf(zbuf[i])) continue;
    if (dropout > 0.0 && rng.uniform() < dropout) continue;
    double z = zbuf[i];
    if (noise_sigma_mm > 0.0) z += noise_sigma_mm * rng.normal();
    out.map.depth_mm[i] = static_cast<float>(std::max(z, 1.0));
    out.map.valid[i] = 1;
  }
  return out;
}

}  // namespace vpx
