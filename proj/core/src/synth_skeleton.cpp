#include <algorithm>
#include <cmath>

#include "vpx/common.hpp"
#include "vpx/synth.hpp"

namespace vpx {

namespace {

constexpr double kDegToRad = 0.017453292519943295;

struct Mat3 {
  double m[3][3];
  static Mat3 identity() { return {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}}; }
  Vec3 apply(const Vec3& v) const {
    return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z};
  }
  Mat3 mul(const Mat3& o) const {
    Mat3 r{};
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        r.m[i][j] = m[i][0] * o.m[0][j] + m[i][1] * o.m[1][j] + m[i][2] * o.m[2][j];
      }
    }
    return r;
  }
};

Mat3 euler_zyx(double ax, double ay, double az) {
  const double cx = std::cos(ax), sx = std::sin(ax);
  const double cy = std::cos(ay), sy = std::sin(ay);
  const double cz = std::cos(az), sz = std::sin(az);
  const Mat3 rx{{{1, 0, 0}, {0, cx, -sx}, {0, sx, cx}}};
  const Mat3 ry{{{cy, 0, sy}, {0, 1, 0}, {-sy, 0, cy}}};
  const Mat3 rz{{{cz, -sz, 0}, {sz, cz, 0}, {0, 0, 1}}};
  return rz.mul(ry).mul(rx);
}

BoneSpec bone(const std::string& name, int parent, Vec3 offset, double radius, double sphere,
              double lx, double ly, double lz) {
  BoneSpec b;
  b.name = name;
  b.parent = parent;
  b.offset_mm = offset;
  b.radius_mm = radius;
  b.sphere_mm = sphere;
  b.lo_deg[0] = -lx;
  b.hi_deg[0] = lx;
  b.lo_deg[1] = -ly;
  b.hi_deg[1] = ly;
  b.lo_deg[2] = -lz;
  b.hi_deg[2] = lz;
  return b;
}

// Joint order follows the usual upper-body-first convention; "right" and
// "left" are the camera's (+x is the figure's screen-right).
SkeletonModel build_humanoid(double scale) {
  check(scale > 0.0, "bone scale must be positive");
  SkeletonModel s;
  s.scale = scale;
  s.head = 0;
  s.neck = 1;
  s.torso = 8;
  auto sc = [scale](double x, double y, double z) { return Vec3{x * scale, y * scale, z * scale}; };
  s.bones = {
      bone("head", 1, sc(0, -230, 0), 34 * scale, 78 * scale, 0, 0, 0),
      bone("neck", 8, sc(0, -450, 0), 86 * scale, 0, 15, 15, 15),
      bone("right_shoulder", 1, sc(175, 15, 0), 32 * scale, 0, 16, 16, 40),
      bone("left_shoulder", 1, sc(-175, 15, 0), 32 * scale, 0, 16, 16, 40),
      bone("right_elbow", 2, sc(78, 290, 0), 29 * scale, 0, 16, 10, 50),
      bone("left_elbow", 3, sc(-78, 290, 0), 29 * scale, 0, 16, 10, 50),
      bone("right_hand", 4, sc(18, 258, 0), 25 * scale, 26 * scale, 0, 0, 0),
      bone("left_hand", 5, sc(-18, 258, 0), 25 * scale, 26 * scale, 0, 0, 0),
      bone("torso", -1, sc(0, 0, 0), 0, 0, 10, 28, 12),
      bone("right_hip", 8, sc(112, 312, 0), 52 * scale, 0, 18, 10, 24),
      bone("left_hip", 8, sc(-112, 312, 0), 52 * scale, 0, 18, 10, 24),
      bone("right_knee", 9, sc(6, 418, 0), 36 * scale, 0, 20, 5, 10),
      bone("left_knee", 10, sc(-6, 418, 0), 36 * scale, 0, 20, 5, 10),
      bone("right_foot", 11, sc(2, 402, 0), 28 * scale, 28 * scale, 0, 0, 0),
      bone("left_foot", 12, sc(-2, 402, 0), 28 * scale, 28 * scale, 0, 0, 0),
  };
  // Knees bend one way: shift the x-rotation window backward.
  for (int k : {11, 12}) {
    s.bones[k].lo_deg[0] = -6;
    s.bones[k].hi_deg[0] = 34;
  }
  return s;
}

}  // namespace

std::vector<std::string> SkeletonModel::joint_names() const {
  std::vector<std::string> names;
  names.reserve(bones.size());
  for (const auto& b : bones) names.push_back(b.name);
  return names;
}

double SkeletonModel::joint_surface_radius(int joint) const {
  check(joint >= 0 && joint < joint_count(), "joint index out of range");
  double r = std::max(bones[joint].radius_mm, bones[joint].sphere_mm);
  for (const auto& b : bones) {
    if (b.parent == joint) r = std::max(r, b.radius_mm);
  }
  return r;
}

SkeletonModel SkeletonModel::humanoid15(double scale) { return build_humanoid(scale); }

SkeletonModel SkeletonModel::humanoid12(double scale) {
  // Same body, reduced export: the torso and hips stay in the rig (they
  // carry the legs) but are not part of the joint list callers see. The
  // reduction is applied by generate_dataset, not here.
  return build_humanoid(scale);
}

PoseSample rest_pose(const SkeletonModel& skel, double root_z_mm) {
  PoseSample p;
  const int j = skel.joint_count();
  p.world.assign(j, Vec3{});
  std::vector<bool> placed(j, false);
  // Root first, then children in passes; the table is small.
  for (int pass = 0; pass < j; ++pass) {
    for (int i = 0; i < j; ++i) {
      if (placed[i]) continue;
      const BoneSpec& b = skel.bones[i];
      if (b.parent < 0) {
        p.world[i] = Vec3{0, -150 * skel.scale, root_z_mm};
        placed[i] = true;
      } else if (placed[b.parent]) {
        p.world[i] = p.world[b.parent] + b.offset_mm;
        placed[i] = true;
      }
    }
  }
  for (int i = 0; i < j; ++i) check(placed[i], "skeleton has an orphaned joint: " + skel.bones[i].name);
  return p;
}

PoseSample sample_pose(const SkeletonModel& skel, const Profile& profile, double angle_scale,
                       Rng& rng) {
  check(angle_scale >= 0.0 && angle_scale <= 1.5, "angle_scale out of range");
  const int j = skel.joint_count();
  const int dims = profile.synth_dims;
  CameraIntrinsics cam;
  cam.fx = cam.fy = profile.synth_focal;
  cam.cx = cam.cy = dims / 2.0;

  // Joints must survive every training crop: the crop origin ranges over
  // [0, margin], so the always-covered region is [margin, pnet_input).
  const double lo_px = profile.pnet_margin + 3.0;
  const double hi_px = profile.pnet_input - 3.0;
  const double z_lo = profile.depth_min_mm + 160.0 * skel.scale;
  const double z_hi = profile.depth_max_mm - 160.0 * skel.scale;
  check(z_lo < z_hi, "depth window too narrow for the figure");

  for (int attempt = 0; attempt < 1000; ++attempt) {
    PoseSample p;
    p.world.assign(j, Vec3{});
    std::vector<Mat3> rot(j, Mat3::identity());
    std::vector<bool> placed(j, false);

    const double root_z = z_lo + (z_hi - z_lo) * rng.uniform();
    const double span_x = 340.0 * skel.scale;
    const Vec3 root{span_x * (2.0 * rng.uniform() - 1.0),
                    (-150.0 + 60.0 * (2.0 * rng.uniform() - 1.0)) * skel.scale, root_z};

    for (int pass = 0; pass < j; ++pass) {
      for (int i = 0; i < j; ++i) {
        if (placed[i]) continue;
        const BoneSpec& b = skel.bones[i];
        if (b.parent >= 0 && !placed[b.parent]) continue;
        const double ax = kDegToRad * angle_scale *
                          (b.lo_deg[0] + (b.hi_deg[0] - b.lo_deg[0]) * rng.uniform());
        const double ay = kDegToRad * angle_scale *
                          (b.lo_deg[1] + (b.hi_deg[1] - b.lo_deg[1]) * rng.uniform());
        const double az = kDegToRad * angle_scale *
                          (b.lo_deg[2] + (b.hi_deg[2] - b.lo_deg[2]) * rng.uniform());
        const Mat3 local = euler_zyx(ax, ay, az);
        if (b.parent < 0) {
          rot[i] = local;
          p.world[i] = root;
        } else {
          rot[i] = rot[b.parent].mul(local);
          p.world[i] = p.world[b.parent] + rot[b.parent].apply(b.offset_mm);
        }
        placed[i] = true;
      }
    }

    bool ok = true;
    for (int i = 0; i < j && ok; ++i) {
      const Vec3& w = p.world[i];
      if (w.z < profile.depth_min_mm + 120.0 || w.z > profile.depth_max_mm - 120.0) {
        ok = false;
        break;
      }
      const Vec2 px = project(w, cam);
      const double pad = skel.joint_surface_radius(i) * cam.fx / w.z;
      if (px.u - pad < lo_px || px.u + pad > hi_px || px.v - pad < lo_px || px.v + pad > hi_px) {
        ok = false;
      }
    }
    if (ok) return p;
  }
  fail("pose sampling failed 1000 times; figure does not fit the camera setup");
}

}  // namespace vpx
