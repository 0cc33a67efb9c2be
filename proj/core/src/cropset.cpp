#include "vpx/cropset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "vpx/common.hpp"
#include "vpx/tdf.hpp"

namespace vpx {

namespace {

using nlohmann::json;

std::string rec_key(std::size_t idx, const char* what) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06zu.%s", idx, what);
  return buf;
}

}  // namespace

CropFrame crop_frame(const CropSet& set, const CropRecord& rec) {
  CropFrame f;
  f.origin_u = rec.center_u - set.grid_xy / 2;
  f.origin_v = rec.center_v - set.grid_xy / 2;
  f.dim_x = set.grid_xy;
  f.dim_y = set.grid_xy;
  f.depth = DepthDiscretization{rec.reference_z, set.bin_size_mm, set.grid_bins};
  f.intrinsics = set.intrinsics;
  return f;
}

void save_cropset(const std::string& dir, const CropSet& set) {
  check(set.num_joints > 0 && set.grid_xy > 0 && set.grid_bins > 0,
        "crop set geometry is unset");
  std::filesystem::create_directories(dir);
  json meta;
  meta["profile"] = set.profile;
  meta["num_joints"] = set.num_joints;
  meta["grid_xy"] = set.grid_xy;
  meta["grid_bins"] = set.grid_bins;
  meta["bin_size_mm"] = set.bin_size_mm;
  meta["intrinsics"] = {{"fx", set.intrinsics.fx},
                        {"fy", set.intrinsics.fy},
                        {"cx", set.intrinsics.cx},
                        {"cy", set.intrinsics.cy}};
  meta["joint_names"] = set.joint_names;

  json records = json::array();
  TensorArchive arc;
  for (std::size_t i = 0; i < set.records.size(); ++i) {
    const CropRecord& r = set.records[i];
    check(static_cast<int>(r.gt_voxel.size()) == set.num_joints &&
              r.gt_in_window.size() == r.gt_voxel.size(),
          "record " + std::to_string(i) + " has a mismatched supervision list");
    json jr;
    jr["frame_id"] = r.frame_id;
    jr["joint_id"] = r.joint_id;
    jr["center_u"] = r.center_u;
    jr["center_v"] = r.center_v;
    jr["reference_z"] = r.reference_z;
    jr["anchor_fallback"] = r.anchor_fallback;
    json gts = json::array();
    for (int j = 0; j < set.num_joints; ++j) {
      gts.push_back({r.gt_voxel[j][0], r.gt_voxel[j][1], r.gt_voxel[j][2],
                     static_cast<int>(r.gt_in_window[j])});
    }
    jr["gt"] = std::move(gts);
    records.push_back(std::move(jr));
    arc.emplace_back(rec_key(i, "bins"), r.column_bins);
    arc.emplace_back(rec_key(i, "patch"), r.patch);
  }
  meta["records"] = std::move(records);

  std::ofstream os(dir + "/crops.json");
  check(os.is_open(), "cannot open " + dir + "/crops.json for writing");
  os << meta.dump(2) << "\n";
  os.close();
  check(os.good(), "write to " + dir + "/crops.json failed");
  save_archive(dir + "/crops.tdf", arc);
}

CropSet load_cropset(const std::string& dir) {
  std::ifstream is(dir + "/crops.json");
  check(is.is_open(), "cannot open " + dir + "/crops.json");
  json meta = json::parse(is, nullptr, false);
  check(!meta.is_discarded(), dir + "/crops.json is not valid JSON");

  CropSet set;
  try {
    set.profile = meta.at("profile").get<std::string>();
    set.num_joints = meta.at("num_joints").get<int>();
    set.grid_xy = meta.at("grid_xy").get<int>();
    set.grid_bins = meta.at("grid_bins").get<int>();
    set.bin_size_mm = meta.at("bin_size_mm").get<double>();
    const json& cam = meta.at("intrinsics");
    set.intrinsics.fx = cam.at("fx").get<double>();
    set.intrinsics.fy = cam.at("fy").get<double>();
    set.intrinsics.cx = cam.at("cx").get<double>();
    set.intrinsics.cy = cam.at("cy").get<double>();
    set.joint_names = meta.at("joint_names").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    fail(dir + "/crops.json is missing or mistypes a field: " + e.what());
  }

  const TensorArchive arc = load_archive(dir + "/crops.tdf");
  const json& records = meta.at("records");
  for (std::size_t i = 0; i < records.size(); ++i) {
    const json& jr = records[i];
    CropRecord r;
    try {
      r.frame_id = jr.at("frame_id").get<int>();
      r.joint_id = jr.at("joint_id").get<int>();
      r.center_u = jr.at("center_u").get<int>();
      r.center_v = jr.at("center_v").get<int>();
      r.reference_z = jr.at("reference_z").get<double>();
      r.anchor_fallback = jr.at("anchor_fallback").get<bool>();
      for (const json& g : jr.at("gt")) {
        r.gt_voxel.push_back({g.at(0).get<double>(), g.at(1).get<double>(),
                              g.at(2).get<double>()});
        r.gt_in_window.push_back(static_cast<std::uint8_t>(g.at(3).get<int>()));
      }
    } catch (const json::exception& e) {
      fail(dir + "/crops.json record " + std::to_string(i) + " is malformed: " + e.what());
    }
    check(static_cast<int>(r.gt_voxel.size()) == set.num_joints,
          "record " + std::to_string(i) + " supervision count does not match num_joints");
    const Tensor* bins = find_entry(arc, rec_key(i, "bins"));
    const Tensor* patch = find_entry(arc, rec_key(i, "patch"));
    check(bins != nullptr && patch != nullptr,
          "record " + std::to_string(i) + " tensors missing from " + dir + "/crops.tdf");
    const std::vector<int> want{set.grid_xy, set.grid_xy};
    check(bins->shape == want && patch->shape == want,
          "record " + std::to_string(i) + " tensor shapes do not match grid_xy");
    r.column_bins = *bins;
    r.patch = *patch;
    set.records.push_back(std::move(r));
  }
  return set;
}

}  // namespace vpx
