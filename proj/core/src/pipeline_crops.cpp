#include <algorithm>
#include <cmath>

#include "vpx/common.hpp"
#include "vpx/heatmap.hpp"
#include "vpx/pipeline.hpp"

namespace vpx {

std::vector<std::array<int, 2>> centers_from_heatmaps(const Tensor& heatmaps, int stride,
                                                      int origin_u, int origin_v) {
  check(heatmaps.rank() == 3, "heatmap stack must be (J, H, W)");
  std::vector<std::array<int, 2>> centers;
  centers.reserve(heatmaps.shape[0]);
  for (int j = 0; j < heatmaps.shape[0]; ++j) {
    const Peak pk = decode_argmax(take_slice(heatmaps, j));
    centers.push_back({origin_u + stride * pk.index[1], origin_v + stride * pk.index[0]});
  }
  return centers;
}

Locator gt_locator() {
  return [](const FrameData& frame) {
    std::vector<std::array<int, 2>> centers;
    centers.reserve(frame.joints.size());
    for (const JointGT& j : frame.joints)
      centers.push_back({static_cast<int>(std::floor(j.pixel.u)),
                         static_cast<int>(std::floor(j.pixel.v))});
    return centers;
  };
}

Locator jitter_locator(int max_px, std::uint64_t seed) {
  check(max_px >= 0, "jitter range must not be negative");
  const Rng root(seed);
  return [max_px, root](const FrameData& frame) {
    Rng rng = root.fork(static_cast<std::uint64_t>(frame.id));
    std::vector<std::array<int, 2>> centers;
    centers.reserve(frame.joints.size());
    for (const JointGT& j : frame.joints) {
      const int du = static_cast<int>(rng.uniform_int(2 * max_px + 1)) - max_px;
      const int dv = static_cast<int>(rng.uniform_int(2 * max_px + 1)) - max_px;
      centers.push_back({static_cast<int>(std::floor(j.pixel.u)) + du,
                         static_cast<int>(std::floor(j.pixel.v)) + dv});
    }
    return centers;
  };
}

Locator pnet_locator(const Model& pnet, const Profile& p, const DatasetMeta& meta) {
  const int origin = p.pnet_margin / 2;
  return [&pnet, &p, &meta, origin](const FrameData& frame) {
    const Tensor in = normalized_depth_crop(frame.depth, meta.z_min_mm, meta.z_max_mm, origin,
                                            origin, p.pnet_input);
    const Tensor hm = network_forward_eval(pnet, in);
    return centers_from_heatmaps(hm, p.heatmap_stride, origin, origin);
  };
}

CropSet generate_crops(const Dataset& ds, const Profile& p, const Locator& locate,
                       CropGenStats* stats) {
  check(!ds.frames.empty(), "dataset has no frames");
  check(ds.meta.profile == p.name, "dataset was generated for profile \"" + ds.meta.profile +
                                       "\", not \"" + p.name + "\"");
  const int J = static_cast<int>(ds.meta.joint_names.size());
  const int X = p.grid_xy, D = p.grid_bins;
  const double bin = p.bin_size_mm;
  const double mid_z = 0.5 * (ds.meta.z_min_mm + ds.meta.z_max_mm);

  CropSet set;
  set.profile = p.name;
  set.num_joints = J;
  set.grid_xy = X;
  set.grid_bins = D;
  set.bin_size_mm = bin;
  set.intrinsics = ds.meta.intrinsics;
  set.joint_names = ds.meta.joint_names;
  if (stats) {
    stats->fallback_per_joint.assign(J, 0);
    stats->records = 0;
  }

  for (const FrameData& frame : ds.frames) {
    const auto centers = locate(frame);
    check(static_cast<int>(centers.size()) == J, "locator joint count mismatch on frame " +
                                                     std::to_string(frame.id));
    std::optional<double> torso_ref;
    if (ds.meta.torso >= 0) {
      const auto& tc = centers[ds.meta.torso];
      torso_ref = estimate_reference_depth(frame.depth, tc[0], tc[1]);
    }
    for (int j = 0; j < J; ++j) {
      const int cu = centers[j][0], cv = centers[j][1];
      const std::optional<double> own = estimate_reference_depth(frame.depth, cu, cv);
      CropRecord rec;
      rec.frame_id = frame.id;
      rec.joint_id = j;
      rec.center_u = cu;
      rec.center_v = cv;
      rec.anchor_fallback = !own.has_value();
      rec.reference_z = own ? *own : torso_ref.value_or(mid_z);

      const OccupancyGrid grid =
          build_local_grid(frame.depth, cu, cv, rec.reference_z, X, X, D, bin);
      rec.column_bins = column_bin_map(grid);
      rec.patch = normalized_patch(frame.depth, cu, cv, X, rec.reference_z, D, bin);

      const int origin_u = cu - X / 2, origin_v = cv - X / 2;
      rec.gt_voxel.reserve(J);
      rec.gt_in_window.reserve(J);
      for (int k = 0; k < J; ++k) {
        const JointGT& g = frame.joints[k];
        const double xf = g.pixel.u - origin_u - 0.5;
        const double yf = g.pixel.v - origin_v - 0.5;
        const double zf = (g.world.z - rec.reference_z) / bin + D / 2 - 0.5;
        rec.gt_voxel.push_back({xf, yf, zf});
        const int cx = nearest_cell(xf), cy = nearest_cell(yf), cz = nearest_cell(zf);
        rec.gt_in_window.push_back(cx >= 0 && cx < X && cy >= 0 && cy < X && cz >= 0 && cz < D);
      }
      if (stats) {
        if (rec.anchor_fallback) ++stats->fallback_per_joint[j];
        ++stats->records;
      }
      set.records.push_back(std::move(rec));
    }
  }
  return set;
}

Vec3 holistic_to_world(const HolisticFrame& f, double x, double y, double z) {
  const double u = f.origin_u + (x + 0.5) * f.scale_u;
  const double v = f.origin_v + (y + 0.5) * f.scale_v;
  const double depth =
      f.depth.reference_z + (z - f.depth.center_bin() + 0.5) * f.depth.bin_size_mm;
  return backproject(u, v, depth, f.intrinsics);
}

HolisticSample build_holistic_sample(const FrameData& frame, const DatasetMeta& meta,
                                     const Profile& p,
                                     const std::vector<std::array<int, 2>>& centers) {
  check(!centers.empty(), "cannot build a figure crop without joint centers");
  const int S = p.holistic_xy, D = p.grid_bins;
  double min_u = centers[0][0], max_u = min_u, min_v = centers[0][1], max_v = min_v;
  for (const auto& c : centers) {
    min_u = std::min(min_u, double(c[0]));
    max_u = std::max(max_u, double(c[0]));
    min_v = std::min(min_v, double(c[1]));
    max_v = std::max(max_v, double(c[1]));
  }
  const double span = std::max(max_u - min_u, max_v - min_v);
  const double pad = std::max(6.0, 0.15 * span);
  const double side = span + 2.0 * pad;

  HolisticSample s;
  s.frame_id = frame.id;
  s.frame.origin_u = 0.5 * (min_u + max_u) - side / 2;
  s.frame.origin_v = 0.5 * (min_v + max_v) - side / 2;
  s.frame.scale_u = side / S;
  s.frame.scale_v = side / S;
  s.frame.intrinsics = meta.intrinsics;
  s.frame.dim_xy = S;

  // Nearest-neighbor depth resampling; interpolation would invent surfaces
  // across silhouette edges.
  std::vector<double> sampled(std::size_t(S) * S, -1.0);
  std::vector<double> valid;
  for (int x = 0; x < S; ++x) {
    for (int y = 0; y < S; ++y) {
      const int u = static_cast<int>(std::floor(s.frame.origin_u + (x + 0.5) * s.frame.scale_u));
      const int v = static_cast<int>(std::floor(s.frame.origin_v + (y + 0.5) * s.frame.scale_v));
      if (frame.depth.is_valid(u, v)) {
        const double z = frame.depth.at(u, v);
        sampled[std::size_t(x) * S + y] = z;
        valid.push_back(z);
      }
    }
  }
  s.frame.anchored = !valid.empty();
  double ref = 0.5 * (meta.z_min_mm + meta.z_max_mm);
  if (s.frame.anchored) {
    const std::size_t mid = (valid.size() - 1) / 2;
    std::nth_element(valid.begin(), valid.begin() + mid, valid.end());
    ref = valid[mid];
  }
  s.frame.depth = DepthDiscretization{ref, p.bin_size_mm, D};

  s.column_bins = Tensor(std::vector<int>{S, S}, -1.0f);
  for (std::size_t i = 0; i < sampled.size(); ++i) {
    if (sampled[i] < 0) continue;
    const auto b = discretize_depth(sampled[i], s.frame.depth);
    if (b) s.column_bins.data[i] = static_cast<float>(*b);
  }

  s.gt_fine.reserve(frame.joints.size());
  for (const JointGT& g : frame.joints) {
    const double xf = (g.pixel.u - s.frame.origin_u) / s.frame.scale_u - 0.5;
    const double yf = (g.pixel.v - s.frame.origin_v) / s.frame.scale_v - 0.5;
    const double zf = (g.world.z - ref) / p.bin_size_mm + D / 2 - 0.5;
    s.gt_fine.push_back({xf, yf, zf});
  }
  return s;
}

std::vector<HolisticSample> build_holistic_samples(const Dataset& ds, const Profile& p,
                                                   const Locator& locate) {
  std::vector<HolisticSample> out;
  out.reserve(ds.frames.size());
  for (const FrameData& frame : ds.frames)
    out.push_back(build_holistic_sample(frame, ds.meta, p, locate(frame)));
  return out;
}

Tensor holistic_window(const HolisticSample& s, int offset, const Profile& p) {
  const int S = p.holistic_xy, C = p.grid_crop_bins;
  check(s.column_bins.shape == std::vector<int>({S, S}),
        "figure grid does not match the profile");
  check(offset >= 0 && offset + C <= p.grid_bins, "depth window offset out of range");
  Tensor out(std::vector<int>{1, S, S, C}, -1.0f);
  const float* bins = s.column_bins.ptr();
  float* o = out.ptr();
  for (std::size_t i = 0; i < std::size_t(S) * S; ++i) {
    const int b = static_cast<int>(bins[i]);
    const int w = b - offset;
    if (b >= 0 && w >= 0 && w < C) o[i * C + w] = 1.0f;
  }
  return out;
}

Tensor holistic_target(const HolisticSample& s, int offset, int num_joints, const Profile& p) {
  check(static_cast<int>(s.gt_fine.size()) == num_joints,
        "figure sample supervision does not cover every joint");
  const int S = p.holistic_xy, C = p.grid_crop_bins;
  check(S % 4 == 0 && C % 4 == 0, "pooled output needs extents divisible by 4");
  const int OS = S / 4, OC = C / 4;
  Tensor out(std::vector<int>{num_joints, OS, OS, OC});
  const std::size_t per = std::size_t(OS) * OS * OC;
  for (int j = 0; j < num_joints; ++j) {
    const auto& g = s.gt_fine[j];
    // Coarse cell c covers fine cells [4c, 4c+4); its center sits at 4c+1.5.
    const Tensor ch = gaussian_target_3d((g[0] - 1.5) / 4.0, (g[1] - 1.5) / 4.0,
                                         (g[2] - offset - 1.5) / 4.0, OS, OS, OC, p.sigma3d);
    std::copy_n(ch.ptr(), per, out.ptr() + std::size_t(j) * per);
  }
  return out;
}

}  // namespace vpx
