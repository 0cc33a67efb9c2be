#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "vpx/common.hpp"
#include "vpx/heatmap.hpp"
#include "vpx/pipeline.hpp"

namespace vpx {

namespace {

using nlohmann::json;

// Per-joint reference depths with the self -> torso -> mid-window chain;
// flagged entries used a fallback.
struct Anchors {
  std::vector<double> ref;
  std::vector<bool> flagged;
};

Anchors anchor_depths(const FrameData& frame, const DatasetMeta& meta,
                      const std::vector<std::array<int, 2>>& centers) {
  const int J = static_cast<int>(centers.size());
  std::optional<double> torso_ref;
  if (meta.torso >= 0) {
    const auto& tc = centers[meta.torso];
    torso_ref = estimate_reference_depth(frame.depth, tc[0], tc[1]);
  }
  const double mid_z = 0.5 * (meta.z_min_mm + meta.z_max_mm);
  Anchors a;
  a.ref.resize(J);
  a.flagged.resize(J);
  for (int j = 0; j < J; ++j) {
    const auto own = estimate_reference_depth(frame.depth, centers[j][0], centers[j][1]);
    a.flagged[j] = !own.has_value();
    a.ref[j] = own ? *own : torso_ref.value_or(mid_z);
  }
  return a;
}

JointPred ray_fallback(int j, const std::array<int, 2>& center, double ref,
                       const CameraIntrinsics& cam) {
  const Vec3 w = backproject(center[0] + 0.5, center[1] + 0.5, ref, cam);
  JointPred pred;
  pred.id = j;
  pred.u = center[0] + 0.5;
  pred.v = center[1] + 0.5;
  pred.x_mm = w.x;
  pred.y_mm = w.y;
  pred.z_mm = w.z;
  pred.confidence = 0.0;
  pred.flagged = true;
  return pred;
}

JointPred world_pred(int j, const Vec3& w, double confidence, const CameraIntrinsics& cam) {
  const Vec2 px = project(w, cam);
  JointPred pred;
  pred.id = j;
  pred.u = px.u;
  pred.v = px.v;
  pred.x_mm = w.x;
  pred.y_mm = w.y;
  pred.z_mm = w.z;
  pred.confidence = confidence;
  pred.flagged = false;
  return pred;
}

Tensor grid_window_input(const OccupancyGrid& grid, int offset, int crop_bins) {
  const int X = grid.values.shape[0], Y = grid.values.shape[1], D = grid.values.shape[2];
  check(offset >= 0 && offset + crop_bins <= D, "depth window offset out of range");
  Tensor out(std::vector<int>{1, X, Y, crop_bins});
  const float* src = grid.values.ptr();
  float* dst = out.ptr();
  for (std::size_t col = 0; col < std::size_t(X) * Y; ++col)
    std::memcpy(dst + col * crop_bins, src + col * D + offset, crop_bins * sizeof(float));
  return out;
}

// Shared 2D stage: centered crop, heatmap peaks, depth anchoring.
struct Stage1 {
  std::vector<std::array<int, 2>> centers;
  Anchors anchors;
};

Stage1 run_stage1(const FrameData& frame, const DatasetMeta& meta, const Profile& p,
                  const PnetFn& pnet) {
  const int J = static_cast<int>(meta.joint_names.size());
  const int origin = p.pnet_margin / 2;
  const Tensor in = normalized_depth_crop(frame.depth, meta.z_min_mm, meta.z_max_mm, origin,
                                          origin, p.pnet_input);
  const Tensor hm = pnet(in, origin, origin);
  const int hw = p.pnet_input / p.heatmap_stride;
  check(hm.shape == std::vector<int>({J, hw, hw}), "heatmap stack has shape " +
                                                       shape_str(hm.shape) + ", expected (" +
                                                       std::to_string(J) + " joints, " +
                                                       std::to_string(hw) + ", " +
                                                       std::to_string(hw) + ")");
  Stage1 s;
  s.centers = centers_from_heatmaps(hm, p.heatmap_stride, origin, origin);
  s.anchors = anchor_depths(frame, meta, s.centers);
  return s;
}

}  // namespace

PnetFn pnet_from_model(const Model& m) {
  return [&m](const Tensor& input, int, int) { return network_forward_eval(m, input); };
}

VnetFn vnet_from_model(const Model& m) {
  return [&m](const Tensor& window, const CropFrame&) {
    return network_forward_eval(m, window);
  };
}

FramePred infer_frame(const FrameData& frame, const DatasetMeta& meta, const Profile& p,
                      const PnetFn& pnet, const VnetFn& vnet) {
  const int J = static_cast<int>(meta.joint_names.size());
  const int X = p.grid_xy, D = p.grid_bins, C = p.grid_crop_bins;
  const Stage1 s1 = run_stage1(frame, meta, p, pnet);

  FramePred out;
  out.frame_id = frame.id;
  out.joints.reserve(J);
  for (int j = 0; j < J; ++j) {
    if (s1.anchors.flagged[j]) {
      out.joints.push_back(
          ray_fallback(j, s1.centers[j], s1.anchors.ref[j], meta.intrinsics));
      continue;
    }
    const OccupancyGrid grid = build_local_grid(frame.depth, s1.centers[j][0], s1.centers[j][1],
                                                s1.anchors.ref[j], X, X, D, p.bin_size_mm);
    const int offset = p.depth_crop_margin();
    const Tensor input = grid_window_input(grid, offset, C);
    const CropFrame wf = window_frame(grid.frame, offset, C);
    const Tensor vol = vnet(input, wf);
    check(vol.shape == std::vector<int>({J, X, X, C}),
          "per-voxel stack has shape " + shape_str(vol.shape));
    const Peak pk = decode_argmax(take_slice(vol, j));
    const Vec3 w = voxel_to_world(wf, pk.index[0], pk.index[1], pk.index[2]);
    out.joints.push_back(world_pred(j, w, pk.value, meta.intrinsics));
  }
  return out;
}

FramePred infer_frame_vl2d(const FrameData& frame, const DatasetMeta& meta, const Profile& p,
                           const PnetFn& pnet, const Model& vl2d) {
  const int J = static_cast<int>(meta.joint_names.size());
  const int X = p.grid_xy, D = p.grid_bins, C = p.grid_crop_bins;
  const Stage1 s1 = run_stage1(frame, meta, p, pnet);

  FramePred out;
  out.frame_id = frame.id;
  out.joints.reserve(J);
  for (int j = 0; j < J; ++j) {
    if (s1.anchors.flagged[j]) {
      out.joints.push_back(
          ray_fallback(j, s1.centers[j], s1.anchors.ref[j], meta.intrinsics));
      continue;
    }
    const int cu = s1.centers[j][0], cv = s1.centers[j][1];
    Tensor patch = normalized_patch(frame.depth, cu, cv, X, s1.anchors.ref[j], D, p.bin_size_mm);
    patch.shape.insert(patch.shape.begin(), 1);
    const Tensor pred = network_forward_eval(vl2d, patch);
    check(pred.shape == std::vector<int>({J * C, X, X}),
          "depth-sliced stack has shape " + shape_str(pred.shape));

    // Channels j*C .. j*C+C-1 are contiguous: reinterpret as (C, X, X).
    Tensor vol(std::vector<int>{C, X, X});
    std::memcpy(vol.ptr(), pred.ptr() + std::size_t(j) * C * X * X,
                vol.numel() * sizeof(float));
    const Peak pk = decode_argmax(vol);
    CropFrame full;
    full.origin_u = cu - X / 2;
    full.origin_v = cv - X / 2;
    full.dim_x = X;
    full.dim_y = X;
    full.depth = DepthDiscretization{s1.anchors.ref[j], p.bin_size_mm, D};
    full.intrinsics = meta.intrinsics;
    const CropFrame wf = window_frame(full, p.depth_crop_margin(), C);
    const Vec3 w = voxel_to_world(wf, pk.index[1], pk.index[2], pk.index[0]);
    out.joints.push_back(world_pred(j, w, pk.value, meta.intrinsics));
  }
  return out;
}

FramePred infer_frame_co2d(const FrameData& frame, const DatasetMeta& meta, const Profile& p,
                           const PnetFn& pnet, const Model& co2d) {
  const int J = static_cast<int>(meta.joint_names.size());
  const int X = p.grid_xy, D = p.grid_bins;
  const Stage1 s1 = run_stage1(frame, meta, p, pnet);

  FramePred out;
  out.frame_id = frame.id;
  out.joints.reserve(J);
  for (int j = 0; j < J; ++j) {
    if (s1.anchors.flagged[j]) {
      out.joints.push_back(
          ray_fallback(j, s1.centers[j], s1.anchors.ref[j], meta.intrinsics));
      continue;
    }
    const int cu = s1.centers[j][0], cv = s1.centers[j][1];
    Tensor patch = normalized_patch(frame.depth, cu, cv, X, s1.anchors.ref[j], D, p.bin_size_mm);
    patch.shape.insert(patch.shape.begin(), 1);
    const Tensor pred = network_forward_eval(co2d, patch);
    check(pred.shape == std::vector<int>({3 * J}),
          "coordinate stack has shape " + shape_str(pred.shape));

    const double hx = X / 2.0, hd = D / 2.0;
    const double xf = pred.data[std::size_t(j) * 3 + 0] * hx + hx - 0.5;
    const double yf = pred.data[std::size_t(j) * 3 + 1] * hx + hx - 0.5;
    const double zf = pred.data[std::size_t(j) * 3 + 2] * hd + hd - 0.5;
    CropFrame full;
    full.origin_u = cu - X / 2;
    full.origin_v = cv - X / 2;
    full.dim_x = X;
    full.dim_y = X;
    full.depth = DepthDiscretization{s1.anchors.ref[j], p.bin_size_mm, D};
    full.intrinsics = meta.intrinsics;
    const Vec3 w = voxel_to_world_f(full, xf, yf, zf);
    out.joints.push_back(world_pred(j, w, 0.0, meta.intrinsics));
  }
  return out;
}

FramePred infer_frame_holistic(const FrameData& frame, const DatasetMeta& meta, const Profile& p,
                               const Locator& locate, const Model& m) {
  const int J = static_cast<int>(meta.joint_names.size());
  const HolisticSample s = build_holistic_sample(frame, meta, p, locate(frame));
  const int offset = p.depth_crop_margin();
  const Tensor input = holistic_window(s, offset, p);
  const Tensor vol = network_forward_eval(m, input);
  const int OS = p.holistic_xy / 4, OC = p.grid_crop_bins / 4;
  check(vol.shape == std::vector<int>({J, OS, OS, OC}),
        "pooled per-voxel stack has shape " + shape_str(vol.shape));

  FramePred out;
  out.frame_id = frame.id;
  out.joints.reserve(J);
  for (int j = 0; j < J; ++j) {
    const Peak pk = decode_argmax(take_slice(vol, j));
    const double xf = 4.0 * pk.index[0] + 1.5;
    const double yf = 4.0 * pk.index[1] + 1.5;
    const double zf = 4.0 * pk.index[2] + 1.5 + offset;
    const Vec3 w = holistic_to_world(s.frame, xf, yf, zf);
    JointPred pred = world_pred(j, w, pk.value, meta.intrinsics);
    if (!s.frame.anchored) {
      pred.flagged = true;
      pred.confidence = 0.0;
    }
    out.joints.push_back(pred);
  }
  return out;
}

void write_predictions(const std::string& path, const std::vector<FramePred>& preds) {
  std::ofstream os(path);
  check(os.is_open(), "cannot open " + path + " for writing");
  for (const FramePred& f : preds) {
    json line;
    line["frame_id"] = f.frame_id;
    json joints = json::array();
    for (const JointPred& j : f.joints) {
      joints.push_back({{"id", j.id},
                        {"u", j.u},
                        {"v", j.v},
                        {"z_mm", j.z_mm},
                        {"x_mm", j.x_mm},
                        {"y_mm", j.y_mm},
                        {"confidence", j.confidence},
                        {"flagged", j.flagged}});
    }
    line["joints"] = std::move(joints);
    os << line.dump() << "\n";
  }
  os.close();
  check(os.good(), "write to " + path + " failed");
}

std::vector<FramePred> read_predictions(const std::string& path) {
  std::ifstream is(path);
  check(is.is_open(), "cannot open " + path);
  std::vector<FramePred> preds;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const json v = json::parse(line, nullptr, false);
    check(!v.is_discarded(), path + ":" + std::to_string(lineno) + " is not valid JSON");
    FramePred f;
    try {
      f.frame_id = v.at("frame_id").get<int>();
      for (const json& jj : v.at("joints")) {
        JointPred j;
        j.id = jj.at("id").get<int>();
        j.u = jj.at("u").get<double>();
        j.v = jj.at("v").get<double>();
        j.z_mm = jj.at("z_mm").get<double>();
        j.x_mm = jj.at("x_mm").get<double>();
        j.y_mm = jj.at("y_mm").get<double>();
        j.confidence = jj.at("confidence").get<double>();
        j.flagged = jj.at("flagged").get<bool>();
        f.joints.push_back(j);
      }
    } catch (const json::exception& e) {
      fail(path + ":" + std::to_string(lineno) + " is malformed: " + e.what());
    }
    preds.push_back(std::move(f));
  }
  return preds;
}

EvalReport evaluate_predictions(const std::vector<FramePred>& preds, const Dataset& ds) {
  check(!preds.empty(), "no predictions to evaluate");
  const int J = static_cast<int>(ds.meta.joint_names.size());
  std::map<int, const FrameData*> by_id;
  for (const FrameData& f : ds.frames) by_id[f.id] = &f;

  std::vector<std::vector<Vec3>> pred3(preds.size()), gt3(preds.size());
  std::vector<std::vector<Vec2>> pred2(preds.size()), gt2(preds.size());
  std::int64_t flagged = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto it = by_id.find(preds[i].frame_id);
    check(it != by_id.end(),
          "prediction for frame " + std::to_string(preds[i].frame_id) + " has no dataset frame");
    const FrameData& gt = *it->second;
    check(static_cast<int>(preds[i].joints.size()) == J,
          "frame " + std::to_string(preds[i].frame_id) + " predicts " +
              std::to_string(preds[i].joints.size()) + " joints, dataset has " +
              std::to_string(J));
    pred3[i].resize(J);
    gt3[i].resize(J);
    pred2[i].resize(J);
    gt2[i].resize(J);
    for (int j = 0; j < J; ++j) {
      const JointPred& jp = preds[i].joints[j];
      check(jp.id == j, "frame " + std::to_string(preds[i].frame_id) +
                            " joints are out of order at position " + std::to_string(j));
      pred3[i][j] = Vec3{jp.x_mm, jp.y_mm, jp.z_mm};
      gt3[i][j] = gt.joints[j].world;
      pred2[i][j] = Vec2{jp.u, jp.v};
      gt2[i][j] = gt.joints[j].pixel;
      if (jp.flagged) ++flagged;
    }
  }

  EvalReport r;
  r.frames = static_cast<int>(preds.size());
  r.flagged_fraction = static_cast<double>(flagged) / (static_cast<double>(preds.size()) * J);
  r.map10 =
      build_table(ds.meta.joint_names, within_distance_per_joint(pred3, gt3, kTenCmMm), r.frames);
  if (ds.meta.head >= 0 && ds.meta.neck >= 0) {
    r.pckh = build_table(ds.meta.joint_names,
                         pckh_per_joint(pred2, gt2, ds.meta.head, ds.meta.neck, 0.5), r.frames);
  }
  return r;
}

namespace {

json table_json(const MetricTable& t) {
  json per = json::object();
  for (std::size_t j = 0; j < t.joint_names.size(); ++j) per[t.joint_names[j]] = t.per_joint[j];
  json groups = json::object();
  for (const auto& g : t.groups) groups[g.first] = g.second;
  return json{{"per_joint", per}, {"groups", groups}};
}

}  // namespace

std::string eval_report_json(const EvalReport& r) {
  json out;
  out["frames"] = r.frames;
  out["flagged_fraction"] = r.flagged_fraction;
  out["map_10cm"] = table_json(r.map10);
  if (!r.pckh.per_joint.empty()) out["pckh_05"] = table_json(r.pckh);
  return out.dump(2);
}

std::string eval_report_text(const EvalReport& r) {
  std::ostringstream os;
  os << render_table(r.map10, "mAP @ 10 cm");
  if (!r.pckh.per_joint.empty()) os << "\n" << render_table(r.pckh, "PCKh @ 0.5");
  os << "\nframes: " << r.frames << "  flagged: " << r.flagged_fraction * 100.0 << "%\n";
  return os.str();
}

}  // namespace vpx
