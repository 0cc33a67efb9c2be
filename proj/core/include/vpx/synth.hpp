#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vpx/geometry.hpp"
#include "vpx/profile.hpp"
#include "vpx/rng.hpp"
#include "vpx/voxelize.hpp"

namespace vpx {

// One joint of the articulated figure. offset_mm places the joint in its
// parent's frame at rest (unit bone scale); the Euler limits bound the
// rotation applied at this joint to its whole subtree. radius_mm is the
// capsule from the parent joint to this one (0 for the root), sphere_mm an
// extra ball centered on the joint (head, hands, feet).
struct BoneSpec {
  std::string name;
  int parent = -1;
  Vec3 offset_mm;
  double radius_mm = 0.0;
  double sphere_mm = 0.0;
  double lo_deg[3] = {0.0, 0.0, 0.0};  // rotation limits about x, y, z
  double hi_deg[3] = {0.0, 0.0, 0.0};
};

struct SkeletonModel {
  std::vector<BoneSpec> bones;
  int head = -1, neck = -1, torso = -1;  // torso may be -1 for reduced sets
  double scale = 1.0;

  int joint_count() const { return static_cast<int>(bones.size()); }
  std::vector<std::string> joint_names() const;
  // Largest primitive radius touching a joint; used by visibility flags.
  double joint_surface_radius(int joint) const;

  // 15-joint full-body figure and its 12-joint reduction (no torso or hips
  // in the exported joint list; the rendered body is identical).
  static SkeletonModel humanoid15(double scale);
  static SkeletonModel humanoid12(double scale);
};

struct PoseSample {
  std::vector<Vec3> world;  // joint centers, camera frame mm
};

// Deterministic rest pose with the root at the given depth; used by shape
// and rendering tests.
PoseSample rest_pose(const SkeletonModel& skel, double root_z_mm);

// Rejection-samples a pose whose joints all project inside the frame region
// that survives every training crop, with depths inside the dataset window.
// angle_scale < 1 shrinks every joint's rotation range. Throws after 1000
// failed attempts, which indicates an impossible camera/figure combination.
PoseSample sample_pose(const SkeletonModel& skel, const Profile& profile, double angle_scale,
                       Rng& rng);

struct RenderedFrame {
  DepthMap map;
  std::vector<std::uint8_t> occluded;  // per joint
  std::vector<Vec2> pixel;             // projected joint centers
};

// Z-buffered analytic ray casting against the capsule figure. A joint is
// flagged occluded when the clean surface depth rendered at its pixel is
// more than its own primitive radius (plus slack) in front of the joint
// center, i.e. some other body part covers it. Noise and dropout are applied
// after the flags are taken.
RenderedFrame render_depth(const PoseSample& pose, const SkeletonModel& skel,
                           const CameraIntrinsics& cam, int width, int height,
                           double noise_sigma_mm, double dropout, Rng& rng);

struct JointGT {
  Vec3 world;
  Vec2 pixel;
  bool occluded = false;
};

struct FrameData {
  int id = 0;
  DepthMap depth;
  std::vector<JointGT> joints;
};

struct DatasetMeta {
  std::string profile = "paper";
  std::string skeleton = "humanoid15";
  int width = 0, height = 0;
  CameraIntrinsics intrinsics;
  double z_min_mm = 0.0, z_max_mm = 0.0;  // depth normalization window
  double bin_size_mm = 25.0;
  int grid_bins = 40;
  std::vector<std::string> joint_names;
  int head = -1, neck = -1, torso = -1;
};

struct Dataset {
  DatasetMeta meta;
  std::vector<FrameData> frames;
};

// Frames are generated from per-frame forked streams, so frame k is the same
// for a given seed no matter how many frames are requested.
Dataset generate_dataset(const Profile& profile, const std::string& skeleton, int num_frames,
                         std::uint64_t seed, double angle_scale);

// Directory layout: manifest.json plus data.tdf holding, per frame,
// "NNNNNN.depth" (H,W) with 0 = no reading, and "NNNNNN.gt" (J,4) rows of
// world x,y,z and the occlusion flag.
void save_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir);

}  // namespace vpx
