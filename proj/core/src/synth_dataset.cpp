#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "vpx/common.hpp"
#include "vpx/synth.hpp"
#include "vpx/tdf.hpp"

namespace vpx {

namespace {

using nlohmann::json;

std::string frame_key(int id, const char* what) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06d.%s", id, what);
  return buf;
}

std::vector<int> export_subset(const std::string& skeleton, int joint_count) {
  if (skeleton == "humanoid15") {
    std::vector<int> all(joint_count);
    for (int i = 0; i < joint_count; ++i) all[i] = i;
    return all;
  }
  if (skeleton == "humanoid12") return {0, 1, 2, 3, 4, 5, 6, 7, 11, 12, 13, 14};
  fail("unknown skeleton \"" + skeleton + "\", expected humanoid15 or humanoid12");
}

}  // namespace

Dataset generate_dataset(const Profile& profile, const std::string& skeleton, int num_frames,
                         std::uint64_t seed, double angle_scale) {
  check(num_frames > 0, "frame count must be positive");
  const SkeletonModel skel = SkeletonModel::humanoid15(profile.bone_scale);
  const std::vector<int> subset = export_subset(skeleton, skel.joint_count());

  Dataset ds;
  ds.meta.profile = profile.name;
  ds.meta.skeleton = skeleton;
  ds.meta.width = profile.synth_dims;
  ds.meta.height = profile.synth_dims;
  ds.meta.intrinsics.fx = ds.meta.intrinsics.fy = profile.synth_focal;
  ds.meta.intrinsics.cx = ds.meta.intrinsics.cy = profile.synth_dims / 2.0;
  ds.meta.z_min_mm = profile.depth_min_mm;
  ds.meta.z_max_mm = profile.depth_max_mm;
  ds.meta.bin_size_mm = profile.bin_size_mm;
  ds.meta.grid_bins = profile.grid_bins;
  const auto all_names = skel.joint_names();
  for (std::size_t k = 0; k < subset.size(); ++k) {
    const int src = subset[k];
    ds.meta.joint_names.push_back(all_names[src]);
    if (src == skel.head) ds.meta.head = static_cast<int>(k);
    if (src == skel.neck) ds.meta.neck = static_cast<int>(k);
    if (src == skel.torso) ds.meta.torso = static_cast<int>(k);
  }

  const Rng root(seed);
  ds.frames.resize(num_frames);
  for (int i = 0; i < num_frames; ++i) {
    Rng fr = root.fork(static_cast<std::uint64_t>(i));
    const PoseSample pose = sample_pose(skel, profile, angle_scale, fr);
    RenderedFrame rendered =
        render_depth(pose, skel, ds.meta.intrinsics, ds.meta.width, ds.meta.height,
                     profile.noise_sigma_mm, 0.002, fr);
    FrameData& f = ds.frames[i];
    f.id = i;
    f.depth = std::move(rendered.map);
    f.joints.resize(subset.size());
    for (std::size_t k = 0; k < subset.size(); ++k) {
      const int src = subset[k];
      f.joints[k].world = pose.world[src];
      f.joints[k].pixel = rendered.pixel[src];
      f.joints[k].occluded = rendered.occluded[src] != 0;
    }
  }
  return ds;
}

void save_dataset(const std::string& dir, const Dataset& ds) {
  std::filesystem::create_directories(dir);
  json meta;
  meta["profile"] = ds.meta.profile;
  meta["skeleton"] = ds.meta.skeleton;
  meta["width"] = ds.meta.width;
  meta["height"] = ds.meta.height;
  meta["intrinsics"] = {{"fx", ds.meta.intrinsics.fx},
                        {"fy", ds.meta.intrinsics.fy},
                        {"cx", ds.meta.intrinsics.cx},
                        {"cy", ds.meta.intrinsics.cy}};
  meta["z_min_mm"] = ds.meta.z_min_mm;
  meta["z_max_mm"] = ds.meta.z_max_mm;
  meta["bin_size_mm"] = ds.meta.bin_size_mm;
  meta["grid_bins"] = ds.meta.grid_bins;
  meta["joint_names"] = ds.meta.joint_names;
  meta["head"] = ds.meta.head;
  meta["neck"] = ds.meta.neck;
  meta["torso"] = ds.meta.torso;
  std::vector<int> ids;
  for (const auto& f : ds.frames) ids.push_back(f.id);
  meta["frames"] = ids;

  {
    std::ofstream os(dir + "/manifest.json");
    check(os.is_open(), "cannot open " + dir + "/manifest.json for writing");
    os << meta.dump(2) << "\n";
    os.close();
    check(os.good(), "write to " + dir + "/manifest.json failed");
  }

  TensorArchive arc;
  const int j = static_cast<int>(ds.meta.joint_names.size());
  for (const auto& f : ds.frames) {
    check(f.depth.width == ds.meta.width && f.depth.height == ds.meta.height,
          "frame " + std::to_string(f.id) + " extents do not match the manifest");
    check(static_cast<int>(f.joints.size()) == j,
          "frame " + std::to_string(f.id) + " joint count does not match the manifest");
    Tensor depth({ds.meta.height, ds.meta.width});
    for (std::size_t i = 0; i < depth.data.size(); ++i) {
      depth.data[i] = f.depth.valid[i] ? f.depth.depth_mm[i] : 0.0f;
    }
    Tensor gt({j, 4});
    for (int k = 0; k < j; ++k) {
      gt.data[k * 4 + 0] = static_cast<float>(f.joints[k].world.x);
      gt.data[k * 4 + 1] = static_cast<float>(f.joints[k].world.y);
      gt.data[k * 4 + 2] = static_cast<float>(f.joints[k].world.z);
      gt.data[k * 4 + 3] = f.joints[k].occluded ? 1.0f : 0.0f;
    }
    arc.emplace_back(frame_key(f.id, "depth"), std::move(depth));
    arc.emplace_back(frame_key(f.id, "gt"), std::move(gt));
  }
  save_archive(dir + "/data.tdf", arc);
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream is(dir + "/manifest.json");
  check(is.is_open(), "cannot open " + dir + "/manifest.json");
  json meta = json::parse(is, nullptr, false);
  check(!meta.is_discarded(), dir + "/manifest.json is not valid JSON");

  Dataset ds;
  try {
    ds.meta.profile = meta.at("profile").get<std::string>();
    ds.meta.skeleton = meta.at("skeleton").get<std::string>();
    ds.meta.width = meta.at("width").get<int>();
    ds.meta.height = meta.at("height").get<int>();
    const json& cam = meta.at("intrinsics");
    ds.meta.intrinsics.fx = cam.at("fx").get<double>();
    ds.meta.intrinsics.fy = cam.at("fy").get<double>();
    ds.meta.intrinsics.cx = cam.at("cx").get<double>();
    ds.meta.intrinsics.cy = cam.at("cy").get<double>();
    ds.meta.z_min_mm = meta.at("z_min_mm").get<double>();
    ds.meta.z_max_mm = meta.at("z_max_mm").get<double>();
    ds.meta.bin_size_mm = meta.at("bin_size_mm").get<double>();
    ds.meta.grid_bins = meta.at("grid_bins").get<int>();
    ds.meta.joint_names = meta.at("joint_names").get<std::vector<std::string>>();
    ds.meta.head = meta.at("head").get<int>();
    ds.meta.neck = meta.at("neck").get<int>();
    ds.meta.torso = meta.at("torso").get<int>();
  } catch (const json::exception& e) {
    fail(dir + "/manifest.json is missing or mistypes a field: " + e.what());
  }
  check(ds.meta.width > 0 && ds.meta.height > 0, "manifest frame extents must be positive");
  check(!ds.meta.joint_names.empty(), "manifest joint list is empty");

  const TensorArchive arc = load_archive(dir + "/data.tdf");
  const int j = static_cast<int>(ds.meta.joint_names.size());
  for (const auto& idj : meta.at("frames")) {
    const int id = idj.get<int>();
    const Tensor* depth = find_entry(arc, frame_key(id, "depth"));
    const Tensor* gt = find_entry(arc, frame_key(id, "gt"));
    check(depth != nullptr && gt != nullptr,
          "frame " + std::to_string(id) + " is missing from " + dir + "/data.tdf");
    check(depth->shape == std::vector<int>({ds.meta.height, ds.meta.width}),
          "frame " + std::to_string(id) + " depth shape " + shape_str(depth->shape) +
              " does not match the manifest");
    check(gt->shape == std::vector<int>({j, 4}),
          "frame " + std::to_string(id) + " gt shape " + shape_str(gt->shape) +
              " does not match the manifest joint list");
    FrameData f;
    f.id = id;
    f.depth.resize(ds.meta.width, ds.meta.height);
    f.depth.intrinsics = ds.meta.intrinsics;
    for (std::size_t i = 0; i < depth->data.size(); ++i) {
      const float z = depth->data[i];
      check(z >= 0.0f, "frame " + std::to_string(id) + " holds a negative depth");
      if (z > 0.0f) {
        f.depth.depth_mm[i] = z;
        f.depth.valid[i] = 1;
      }
    }
    f.joints.resize(j);
    for (int k = 0; k < j; ++k) {
      JointGT& g = f.joints[k];
      g.world = {gt->data[k * 4 + 0], gt->data[k * 4 + 1], gt->data[k * 4 + 2]};
      g.occluded = gt->data[k * 4 + 3] != 0.0f;
      check(g.world.z > 0.0, "frame " + std::to_string(id) + " joint " + std::to_string(k) +
                                 " has non-positive depth");
      g.pixel = project(g.world, ds.meta.intrinsics);
    }
    ds.frames.push_back(std::move(f));
  }
  return ds;
}

}  // namespace vpx
