#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "json.hpp"
#include "vpx/cropset.hpp"
#include "vpx/heatmap.hpp"
#include "vpx/network.hpp"
#include "vpx/pipeline.hpp"
#include "vpx/profile.hpp"
#include "vpx/rng.hpp"
#include "vpx/synth.hpp"
#include "vpx/voxelize.hpp"

using namespace vpx;

namespace {

DepthMap ramp_map(int w, int h, double base, double step) {
  DepthMap m;
  m.resize(w, h);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u) {
      m.depth_mm[std::size_t(v) * w + u] = static_cast<float>(base + step * (v * w + u));
      m.valid[std::size_t(v) * w + u] = 1;
    }
  return m;
}

// Worst-case world displacement over the corners of a half-pixel,
// half-bin quantization box around (u, v, z).
double quantization_bound(double u, double v, double z, double half_bin,
                          const CameraIntrinsics& cam) {
  const Vec3 center = backproject(u, v, z, cam);
  double worst = 0.0;
  for (int a = -1; a <= 1; a += 2)
    for (int b = -1; b <= 1; b += 2)
      for (int c = -1; c <= 1; c += 2) {
        const Vec3 w = backproject(u + 0.5 * a, v + 0.5 * b, z + half_bin * c, cam);
        worst = std::max(worst, (w - center).norm());
      }
  return worst;
}

}  // namespace

TEST_CASE("nearest_cell rounds to the covering cell") {
  CHECK(nearest_cell(0.0) == 0);
  CHECK(nearest_cell(0.49) == 0);
  CHECK(nearest_cell(0.5) == 1);  // cell x covers [x-0.5, x+0.5)
  CHECK(nearest_cell(-0.5) == 0);
  CHECK(nearest_cell(-0.51) == -1);
  CHECK(nearest_cell(7.2) == 7);
}

TEST_CASE("normalized_depth_crop maps the window onto [-1, 1]") {
  DepthMap m = ramp_map(8, 8, 1000.0, 0.0);
  m.depth_mm[0 * 8 + 0] = 1000.0f;  // z_min
  m.depth_mm[0 * 8 + 1] = 2000.0f;  // z_max
  m.depth_mm[0 * 8 + 2] = 1500.0f;  // midpoint
  m.depth_mm[0 * 8 + 3] = 2500.0f;  // beyond the window, clamps
  m.depth_mm[0 * 8 + 4] = 500.0f;
  m.valid[0 * 8 + 5] = 0;  // dropped reading

  const Tensor crop = normalized_depth_crop(m, 1000.0, 2000.0, 0, 0, 6);
  REQUIRE(crop.shape == std::vector<int>({1, 6, 6}));
  CHECK(crop.at({0, 0, 0}) == -1.0f);
  CHECK(crop.at({0, 0, 1}) == 1.0f);
  CHECK(crop.at({0, 0, 2}) == 0.0f);
  CHECK(crop.at({0, 0, 3}) == 1.0f);
  CHECK(crop.at({0, 0, 4}) == -1.0f);
  CHECK(crop.at({0, 0, 5}) == -1.0f);

  // Layout is [v][u]: pixel (u=1, v=2) lands at crop[0][2][1].
  m.depth_mm[2 * 8 + 1] = 1750.0f;
  const Tensor c2 = normalized_depth_crop(m, 1000.0, 2000.0, 0, 0, 6);
  CHECK(c2.at({0, 2, 1}) == 0.5f);

  // Out-of-image pixels read as no-reading.
  const Tensor edge = normalized_depth_crop(m, 1000.0, 2000.0, -2, -2, 4);
  CHECK(edge.at({0, 0, 0}) == -1.0f);
  CHECK(edge.at({0, 0, 1}) == -1.0f);
  CHECK(edge.at({0, 2, 2}) == crop.at({0, 0, 0}));

  CHECK_THROWS(normalized_depth_crop(m, 2000.0, 1000.0, 0, 0, 4));
  CHECK_THROWS(normalized_depth_crop(m, 1000.0, 2000.0, 0, 0, 0));
}

TEST_CASE("normalized_patch is centered and scaled by the grid half-range") {
  DepthMap m = ramp_map(10, 10, 2000.0, 0.0);
  // num_bins 8 with 25 mm bins: half-range 100 mm around the reference.
  m.depth_mm[5 * 10 + 5] = 2050.0f;
  m.depth_mm[5 * 10 + 6] = 2100.0f;
  m.depth_mm[5 * 10 + 4] = 1850.0f;  // clamps to -1
  m.valid[6 * 10 + 5] = 0;

  const Tensor patch = normalized_patch(m, 5, 5, 4, 2000.0, 8, 25.0);
  REQUIRE(patch.shape == std::vector<int>({4, 4}));
  // origin = center - size/2 = (3, 3); layout is [x][y].
  CHECK(patch.at({2, 2}) == 0.5f);    // pixel (5, 5)
  CHECK(patch.at({3, 2}) == 1.0f);    // pixel (6, 5)
  CHECK(patch.at({1, 2}) == -1.0f);   // pixel (4, 5), clamped
  CHECK(patch.at({2, 3}) == -1.0f);   // pixel (5, 6), dropped
  CHECK(patch.at({0, 0}) == 0.0f);    // background at the reference

  CHECK_THROWS(normalized_patch(m, 5, 5, 0, 2000.0, 8, 25.0));
  CHECK_THROWS(normalized_patch(m, 5, 5, 4, 2000.0, 8, 0.0));
}

TEST_CASE("pnet_target peaks at the joint cell") {
  const Profile p = Profile::tiny();
  const int s = p.heatmap_stride;
  const int hw = p.pnet_input / s;
  REQUIRE(hw == 24);

  // Joint at the exact center of heat cell (u=7, v=4) for origin (6, 6).
  std::vector<JointGT> joints(2);
  joints[0].pixel = {6 + (7 + 0.5) * s, 6 + (4 + 0.5) * s};
  joints[1].pixel = {6 + (2 + 0.5) * s, 6 + (21 + 0.5) * s};
  const Tensor t = pnet_target(joints, p, 6, 6);
  REQUIRE(t.shape == std::vector<int>({2, hw, hw}));

  CHECK(t.at({0, 4, 7}) == 1.0f);
  const Peak pk0 = decode_argmax(take_slice(t, 0));
  CHECK(pk0.index == std::vector<int>({4, 7}));
  const Peak pk1 = decode_argmax(take_slice(t, 1));
  CHECK(pk1.index == std::vector<int>({21, 2}));

  // One heat cell away falls off by exp(-1/(2 sigma^2)).
  const double expect = std::exp(-1.0 / (2.0 * p.sigma2d * p.sigma2d));
  CHECK(t.at({0, 4, 8}) == doctest::Approx(expect).epsilon(1e-6));

  Profile bad = p;
  bad.pnet_input = 97;  // stride no longer divides the crop
  CHECK_THROWS(pnet_target(joints, bad, 0, 0));
  CHECK_THROWS(pnet_target({}, p, 0, 0));
}

TEST_CASE("centers_from_heatmaps scales peaks back to stored pixels") {
  Tensor hm(std::vector<int>{2, 5, 7}, 0.0f);
  hm.at({0, 3, 2}) = 1.0f;
  hm.at({1, 0, 6}) = 0.5f;
  const auto centers = centers_from_heatmaps(hm, 4, 10, 20);
  REQUIRE(centers.size() == 2);
  CHECK(centers[0] == std::array<int, 2>{10 + 4 * 2, 20 + 4 * 3});
  CHECK(centers[1] == std::array<int, 2>{10 + 4 * 6, 20 + 4 * 0});
  CHECK_THROWS(centers_from_heatmaps(take_slice(hm, 0), 4, 0, 0));
}

TEST_CASE("crop_window matches the expanded occupancy grid") {
  const Profile p = Profile::tiny();
  const int X = p.grid_xy, D = p.grid_bins, C = p.grid_crop_bins;
  Rng rng(33);

  CropRecord rec;
  rec.column_bins = Tensor(std::vector<int>{X, X});
  for (float& b : rec.column_bins.data) {
    const int pick = static_cast<int>(rng.uniform_int(D + 4));
    b = static_cast<float>(pick >= D ? -1 : pick);  // mix of empty columns
  }

  CropFrame frame;
  frame.origin_u = 40;
  frame.origin_v = 50;
  frame.dim_x = X;
  frame.dim_y = X;
  frame.depth = DepthDiscretization{2100.0, p.bin_size_mm, D};
  const OccupancyGrid full = grid_from_column_bins(rec.column_bins, frame);

  for (int offset : {0, p.depth_crop_margin(), D - C}) {
    const Tensor win = crop_window(rec, offset, p);
    REQUIRE(win.shape == std::vector<int>({1, X, X, C}));
    for (int x = 0; x < X; ++x)
      for (int y = 0; y < X; ++y)
        for (int d = 0; d < C; ++d)
          CHECK(win.at({0, x, y, d}) == full.values.at({x, y, d + offset}));
  }

  CHECK_THROWS(crop_window(rec, -1, p));
  CHECK_THROWS(crop_window(rec, D - C + 1, p));
  CropRecord bad;
  bad.column_bins = Tensor(std::vector<int>{X, X - 1});
  CHECK_THROWS(crop_window(bad, 0, p));
}

TEST_CASE("window_frame preserves every bin's metric depth") {
  CropFrame full;
  full.origin_u = 3;
  full.origin_v = 9;
  full.dim_x = 16;
  full.dim_y = 16;
  full.depth = DepthDiscretization{2137.0, 25.0, 24};

  for (int offset : {0, 2, 4}) {
    const CropFrame w = window_frame(full, offset, 20);
    CHECK(w.origin_u == full.origin_u);
    CHECK(w.depth.num_bins == 20);
    CHECK(w.depth.bin_size_mm == full.depth.bin_size_mm);
    for (int b = 0; b < 20; ++b)
      CHECK(bin_to_depth(b, w.depth) ==
            doctest::Approx(bin_to_depth(b + offset, full.depth)).epsilon(1e-12));
  }
  CHECK_THROWS(window_frame(full, 5, 20));
  CHECK_THROWS(window_frame(full, -1, 20));
  CHECK_THROWS(window_frame(full, 0, 0));
}

TEST_CASE("vnet_target stacks shifted per-joint gaussians") {
  const Profile p = Profile::tiny();
  const int X = p.grid_xy, C = p.grid_crop_bins;
  const int offset = p.depth_crop_margin();

  CropRecord rec;
  rec.gt_voxel = {{7.0, 4.0, 12.0}, {3.25, 9.5, 6.75}, {7.0, 4.0, 60.0}};
  const Tensor t = vnet_target(rec, offset, 3, p);
  REQUIRE(t.shape == std::vector<int>({3, X, X, C}));

  // In-window joint at exact cell coordinates: peak value 1 at that cell.
  CHECK(t.at({0, 7, 4, 12 - offset}) == 1.0f);
  const Peak pk = decode_argmax(take_slice(t, 0));
  CHECK(pk.index == std::vector<int>({7, 4, 12 - offset}));

  // Channels are the per-joint gaussians evaluated on the shifted window.
  for (int j = 0; j < 3; ++j) {
    const auto& g = rec.gt_voxel[j];
    const Tensor ref = gaussian_target_3d(g[0], g[1], g[2] - offset, X, X, C, p.sigma3d);
    const Tensor ch = take_slice(t, j);
    REQUIRE(ch.data == ref.data);
  }

  // A joint far outside the depth window leaves only a vanishing tail.
  const Tensor far_ch = take_slice(t, 2);
  CHECK(*std::max_element(far_ch.data.begin(), far_ch.data.end()) < 1e-6f);

  CHECK_THROWS(vnet_target(rec, offset, 4, p));
}

TEST_CASE("vl2d_target is the depth-sliced transpose of vnet_target") {
  const Profile p = Profile::tiny();
  const int X = p.grid_xy, C = p.grid_crop_bins;
  const int offset = p.depth_crop_margin();

  CropRecord rec;
  rec.gt_voxel = {{7.0, 4.0, 12.0}, {3.25, 9.5, 6.75}};
  const Tensor vol = vnet_target(rec, offset, 2, p);
  const Tensor flat = vl2d_target(rec, offset, 2, p);
  REQUIRE(flat.shape == std::vector<int>({2 * C, X, X}));

  for (int j = 0; j < 2; ++j)
    for (int d = 0; d < C; ++d)
      for (int x = 0; x < X; ++x)
        for (int y = 0; y < X; ++y)
          CHECK(flat.at({j * C + d, x, y}) == vol.at({j, x, y, d}));

  CHECK_THROWS(vl2d_target(rec, offset, 3, p));
}

TEST_CASE("co2d_target normalizes grid coordinates and clamps outliers") {
  const Profile p = Profile::tiny();
  const int X = p.grid_xy, D = p.grid_bins;

  CropRecord rec;
  rec.gt_voxel = {{7.5, 0.0, 11.5}, {100.0, -50.0, 23.5}};
  const Tensor t = co2d_target(rec, 2, p);
  REQUIRE(t.shape == std::vector<int>({6}));

  const double hx = X / 2.0, hd = D / 2.0;
  CHECK(t.data[0] == doctest::Approx((7.5 + 0.5 - hx) / hx));
  CHECK(t.data[1] == doctest::Approx((0.0 + 0.5 - hx) / hx));
  CHECK(t.data[2] == doctest::Approx((11.5 + 0.5 - hd) / hd));
  CHECK(t.data[3] == 1.5f);   // clamped high
  CHECK(t.data[4] == -1.5f);  // clamped low
  CHECK(t.data[5] == doctest::Approx((23.5 + 0.5 - hd) / hd));

  CHECK_THROWS(co2d_target(rec, 3, p));
}

TEST_CASE("split_frames partitions deterministically") {
  const Split s = split_frames(10, 0.3, 4);
  CHECK(s.validation.size() == 3);
  CHECK(s.train.size() == 7);
  std::set<int> all(s.train.begin(), s.train.end());
  all.insert(s.validation.begin(), s.validation.end());
  CHECK(all.size() == 10);
  CHECK(*all.begin() == 0);
  CHECK(*all.rbegin() == 9);

  const Split again = split_frames(10, 0.3, 4);
  CHECK(again.train == s.train);
  CHECK(again.validation == s.validation);
  const Split other = split_frames(10, 0.3, 5);
  CHECK(other.train != s.train);

  CHECK(split_frames(10, 0.0, 0).validation.empty());
  CHECK(split_frames(10, 0.0, 0).train.size() == 10);
  // The training side is never left empty.
  const Split tight = split_frames(10, 0.99, 0);
  CHECK(tight.validation.size() == 9);
  CHECK(tight.train.size() == 1);
  CHECK(split_frames(1, 0.9, 0).train.size() == 1);

  CHECK_THROWS(split_frames(0, 0.1, 0));
  CHECK_THROWS(split_frames(10, 1.0, 0));
  CHECK_THROWS(split_frames(10, -0.1, 0));
}

TEST_CASE("locators floor ground truth and jitter reproducibly") {
  FrameData frame;
  frame.id = 12;
  frame.joints.resize(3);
  frame.joints[0].pixel = {10.7, 20.2};
  frame.joints[1].pixel = {5.0, 5.999};
  frame.joints[2].pixel = {63.49, 0.5};

  const auto gt = gt_locator()(frame);
  REQUIRE(gt.size() == 3);
  CHECK(gt[0] == std::array<int, 2>{10, 20});
  CHECK(gt[1] == std::array<int, 2>{5, 5});
  CHECK(gt[2] == std::array<int, 2>{63, 0});

  CHECK(jitter_locator(0, 9)(frame) == gt);

  const Locator jit = jitter_locator(3, 9);
  const auto a = jit(frame);
  CHECK(jit(frame) == a);  // forked per frame id, not per call
  CHECK(jitter_locator(3, 9)(frame) == a);
  for (int j = 0; j < 3; ++j) {
    CHECK(std::abs(a[j][0] - gt[j][0]) <= 3);
    CHECK(std::abs(a[j][1] - gt[j][1]) <= 3);
  }

  FrameData other = frame;
  other.id = 13;
  bool moved = false;
  const auto b = jit(other);
  for (int j = 0; j < 3; ++j) moved = moved || b[j] != a[j];
  CHECK(moved);

  CHECK_THROWS(jitter_locator(-1, 0));
}

TEST_CASE("generate_crops emits one anchored record per frame and joint") {
  const Profile p = Profile::tiny();
  const Dataset ds = generate_dataset(p, "humanoid15", 6, 11, 1.0);
  const int J = static_cast<int>(ds.meta.joint_names.size());
  REQUIRE(J == 15);
  const int X = p.grid_xy, D = p.grid_bins;

  CropGenStats stats;
  const CropSet set = generate_crops(ds, p, gt_locator(), &stats);
  CHECK(set.profile == "tiny");
  CHECK(set.num_joints == J);
  CHECK(set.grid_xy == X);
  CHECK(set.grid_bins == D);
  CHECK(set.bin_size_mm == p.bin_size_mm);
  CHECK(set.joint_names == ds.meta.joint_names);
  REQUIRE(set.records.size() == std::size_t(6) * J);
  CHECK(stats.records == 6 * J);
  REQUIRE(stats.fallback_per_joint.size() == std::size_t(J));

  std::int64_t fallbacks = 0;
  const double mid_z = 0.5 * (ds.meta.z_min_mm + ds.meta.z_max_mm);
  for (std::size_t r = 0; r < set.records.size(); ++r) {
    const CropRecord& rec = set.records[r];
    const FrameData& frame = ds.frames[r / J];
    const int j = static_cast<int>(r % J);
    CHECK(rec.frame_id == frame.id);
    CHECK(rec.joint_id == j);
    CHECK(rec.center_u == static_cast<int>(std::floor(frame.joints[j].pixel.u)));
    CHECK(rec.center_v == static_cast<int>(std::floor(frame.joints[j].pixel.v)));
    REQUIRE(rec.column_bins.shape == std::vector<int>({X, X}));
    REQUIRE(rec.patch.shape == std::vector<int>({X, X}));
    REQUIRE(rec.gt_voxel.size() == std::size_t(J));
    REQUIRE(rec.gt_in_window.size() == std::size_t(J));

    const auto own = estimate_reference_depth(frame.depth, rec.center_u, rec.center_v);
    CHECK(rec.anchor_fallback == !own.has_value());
    if (own) {
      CHECK(rec.reference_z == *own);
    } else {
      ++fallbacks;
      CHECK(rec.reference_z >= ds.meta.z_min_mm - 1.0);
      CHECK(rec.reference_z <= std::max(ds.meta.z_max_mm, mid_z) + 1.0);
    }

    for (int k = 0; k < J; ++k) {
      const JointGT& g = frame.joints[k];
      const double xf = g.pixel.u - (rec.center_u - X / 2) - 0.5;
      const double yf = g.pixel.v - (rec.center_v - X / 2) - 0.5;
      const double zf = (g.world.z - rec.reference_z) / p.bin_size_mm + D / 2 - 0.5;
      CHECK(rec.gt_voxel[k][0] == doctest::Approx(xf).epsilon(1e-12));
      CHECK(rec.gt_voxel[k][1] == doctest::Approx(yf).epsilon(1e-12));
      CHECK(rec.gt_voxel[k][2] == doctest::Approx(zf).epsilon(1e-12));
      const int cx = nearest_cell(xf), cy = nearest_cell(yf), cz = nearest_cell(zf);
      const bool inside = cx >= 0 && cx < X && cy >= 0 && cy < X && cz >= 0 && cz < D;
      CHECK(rec.gt_in_window[k] == (inside ? 1 : 0));
    }
    // The record's own joint always lands inside its window spatially.
    CHECK(nearest_cell(rec.gt_voxel[j][0]) >= 0);
    CHECK(nearest_cell(rec.gt_voxel[j][0]) < X);
  }
  std::int64_t counted = 0;
  for (std::int64_t c : stats.fallback_per_joint) counted += c;
  CHECK(counted == fallbacks);

  // The stored grid round-trips through its placement.
  const CropRecord& rec = set.records[3];
  const CropFrame cf = crop_frame(set, rec);
  CHECK(cf.origin_u == rec.center_u - X / 2);
  CHECK(cf.origin_v == rec.center_v - X / 2);
  CHECK(cf.dim_x == X);
  CHECK(cf.depth.num_bins == D);
  CHECK(cf.depth.reference_z == rec.reference_z);
  const FrameData& f0 = ds.frames[3 / J];
  const OccupancyGrid direct = build_local_grid(f0.depth, rec.center_u, rec.center_v,
                                                rec.reference_z, X, X, D, p.bin_size_mm);
  const OccupancyGrid expanded = grid_from_column_bins(rec.column_bins, cf);
  CHECK(expanded.values.data == direct.values.data);

  // Patches come from the same window and reference.
  const Tensor patch = normalized_patch(f0.depth, rec.center_u, rec.center_v, X,
                                        rec.reference_z, D, p.bin_size_mm);
  CHECK(rec.patch.data == patch.data);

  CHECK_THROWS(generate_crops(ds, Profile::paper(), gt_locator(), nullptr));
  const Locator broken = [](const FrameData&) {
    return std::vector<std::array<int, 2>>{{0, 0}};
  };
  CHECK_THROWS(generate_crops(ds, p, broken, nullptr));
}

TEST_CASE("cropset io round trips exactly") {
  const Profile p = Profile::tiny();
  const Dataset ds = generate_dataset(p, "humanoid15", 2, 17, 1.0);
  const CropSet set = generate_crops(ds, p, jitter_locator(2, 3), nullptr);

  const char* dir = "cropset_io_test";
  save_cropset(dir, set);
  const CropSet back = load_cropset(dir);

  CHECK(back.profile == set.profile);
  CHECK(back.num_joints == set.num_joints);
  CHECK(back.grid_xy == set.grid_xy);
  CHECK(back.grid_bins == set.grid_bins);
  CHECK(back.bin_size_mm == set.bin_size_mm);
  CHECK(back.intrinsics.fx == set.intrinsics.fx);
  CHECK(back.intrinsics.cx == set.intrinsics.cx);
  CHECK(back.joint_names == set.joint_names);
  REQUIRE(back.records.size() == set.records.size());
  for (std::size_t r = 0; r < set.records.size(); ++r) {
    const CropRecord& a = set.records[r];
    const CropRecord& b = back.records[r];
    CHECK(b.frame_id == a.frame_id);
    CHECK(b.joint_id == a.joint_id);
    CHECK(b.center_u == a.center_u);
    CHECK(b.center_v == a.center_v);
    CHECK(b.reference_z == a.reference_z);
    CHECK(b.anchor_fallback == a.anchor_fallback);
    REQUIRE(b.column_bins.data == a.column_bins.data);
    REQUIRE(b.patch.data == a.patch.data);
    REQUIRE(b.gt_voxel == a.gt_voxel);
    REQUIRE(b.gt_in_window == a.gt_in_window);
  }
  std::filesystem::remove_all(dir);

  CHECK_THROWS(load_cropset("missing_cropset_dir"));
}

TEST_CASE("predictions round trip through json lines") {
  std::vector<FramePred> preds(2);
  preds[0].frame_id = 4;
  preds[0].joints.resize(2);
  preds[0].joints[0] = {0, 10.25, 20.5, -120.0, 85.5, 2100.0, 0.75, false};
  preds[0].joints[1] = {1, 0.0, 0.0, 5.0, -3.0, 1800.0, 0.0, true};
  preds[1].frame_id = 9;
  preds[1].joints.resize(1);
  preds[1].joints[0] = {0, 64.0, 32.0, 1.5, 2.5, 2000.0, 1.0, false};

  const char* path = "preds_io_test.jsonl";
  write_predictions(path, preds);
  const auto back = read_predictions(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].frame_id == 4);
  REQUIRE(back[0].joints.size() == 2);
  CHECK(back[0].joints[0].u == 10.25);
  CHECK(back[0].joints[0].x_mm == -120.0);
  CHECK(back[0].joints[0].confidence == 0.75);
  CHECK(back[0].joints[0].flagged == false);
  CHECK(back[0].joints[1].flagged == true);
  CHECK(back[1].joints[0].z_mm == 2000.0);
  std::filesystem::remove(path);

  {
    std::ofstream os("preds_bad_test.jsonl");
    os << "{\"frame_id\": 1, \"joints\": [{\"id\": 0}]}\n";
  }
  CHECK_THROWS(read_predictions("preds_bad_test.jsonl"));
  std::filesystem::remove("preds_bad_test.jsonl");
  CHECK_THROWS(read_predictions("missing_preds.jsonl"));
}

TEST_CASE("evaluate_predictions scores ground truth perfectly") {
  const Profile p = Profile::tiny();
  const Dataset ds = generate_dataset(p, "humanoid15", 3, 29, 1.0);
  const int J = static_cast<int>(ds.meta.joint_names.size());

  std::vector<FramePred> preds;
  for (const FrameData& f : ds.frames) {
    FramePred fp;
    fp.frame_id = f.id;
    for (int j = 0; j < J; ++j) {
      JointPred jp;
      jp.id = j;
      jp.u = f.joints[j].pixel.u;
      jp.v = f.joints[j].pixel.v;
      jp.x_mm = f.joints[j].world.x;
      jp.y_mm = f.joints[j].world.y;
      jp.z_mm = f.joints[j].world.z;
      jp.confidence = 1.0;
      fp.joints.push_back(jp);
    }
    preds.push_back(fp);
  }

  EvalReport r = evaluate_predictions(preds, ds);
  CHECK(r.frames == 3);
  CHECK(r.flagged_fraction == 0.0);
  REQUIRE(r.map10.per_joint.size() == std::size_t(J));
  for (double v : r.map10.per_joint) CHECK(v == 1.0);
  REQUIRE(r.pckh.per_joint.size() == std::size_t(J));
  for (double v : r.pckh.per_joint) CHECK(v == 1.0);

  // A 200 mm depth error on one frame's head costs exactly one hit in 3D
  // and nothing in 2D.
  preds[1].joints[0].z_mm += 200.0;
  preds[2].joints[3].flagged = true;
  r = evaluate_predictions(preds, ds);
  CHECK(r.map10.per_joint[0] == doctest::Approx(2.0 / 3.0));
  CHECK(r.map10.per_joint[1] == 1.0);
  CHECK(r.pckh.per_joint[0] == 1.0);
  CHECK(r.flagged_fraction == doctest::Approx(1.0 / (3.0 * J)));

  const nlohmann::json report = nlohmann::json::parse(eval_report_json(r));
  CHECK(report["frames"] == 3);
  CHECK(report["map_10cm"]["per_joint"]["head"] == doctest::Approx(2.0 / 3.0));
  CHECK(report["map_10cm"]["groups"].contains("Full Body"));
  CHECK(report["pckh_05"]["per_joint"]["head"] == 1.0);
  const std::string text = eval_report_text(r);
  CHECK(text.find("mAP @ 10 cm") != std::string::npos);
  CHECK(text.find("PCKh @ 0.5") != std::string::npos);

  // Mismatches are rejected rather than silently skipped.
  auto bad = preds;
  bad[0].frame_id = 999;
  CHECK_THROWS(evaluate_predictions(bad, ds));
  bad = preds;
  bad[0].joints.pop_back();
  CHECK_THROWS(evaluate_predictions(bad, ds));
  bad = preds;
  std::swap(bad[0].joints[0].id, bad[0].joints[1].id);
  CHECK_THROWS(evaluate_predictions(bad, ds));
  CHECK_THROWS(evaluate_predictions({}, ds));
}

TEST_CASE("infer_frame with oracle stages recovers joints to grid resolution") {
  const Profile p = Profile::tiny();
  const Dataset ds = generate_dataset(p, "humanoid15", 4, 21, 1.0);
  const int J = static_cast<int>(ds.meta.joint_names.size());
  const int X = p.grid_xy, C = p.grid_crop_bins;
  const int origin = p.pnet_margin / 2;

  int checked = 0, unflagged = 0, total = 0;
  for (const FrameData& frame : ds.frames) {
    const PnetFn pnet = [&](const Tensor&, int ou, int ov) {
      return pnet_target(frame.joints, p, ou, ov);
    };
    const VnetFn vnet = [&](const Tensor&, const CropFrame& wf) {
      Tensor out(std::vector<int>{J, X, X, C});
      const std::size_t per = std::size_t(X) * X * C;
      for (int j = 0; j < J; ++j) {
        const JointGT& g = frame.joints[j];
        const double xf = g.pixel.u - wf.origin_u - 0.5;
        const double yf = g.pixel.v - wf.origin_v - 0.5;
        const double zf = (g.world.z - wf.depth.reference_z) / wf.depth.bin_size_mm +
                          wf.depth.center_bin() - 0.5;
        const Tensor ch = gaussian_target_3d(xf, yf, zf, X, X, C, p.sigma3d);
        std::copy_n(ch.ptr(), per, out.ptr() + std::size_t(j) * per);
      }
      return out;
    };

    // The anchoring the pipeline will use, recomputed independently.
    const auto centers = centers_from_heatmaps(pnet_target(frame.joints, p, origin, origin),
                                               p.heatmap_stride, origin, origin);

    const FramePred pred = infer_frame(frame, ds.meta, p, pnet, vnet);
    CHECK(pred.frame_id == frame.id);
    REQUIRE(pred.joints.size() == std::size_t(J));
    for (int j = 0; j < J; ++j) {
      const JointPred& jp = pred.joints[j];
      CHECK(jp.id == j);
      ++total;
      const auto own = estimate_reference_depth(frame.depth, centers[j][0], centers[j][1]);
      CHECK(jp.flagged == !own.has_value());
      if (jp.flagged) {
        CHECK(jp.confidence == 0.0);
        continue;
      }
      ++unflagged;
      if (frame.joints[j].occluded) continue;
      // Skip joints whose depth lands outside or within one bin of the
      // window border; truncation there legitimately costs a full bin.
      const double zf = (frame.joints[j].world.z - *own) / p.bin_size_mm + C / 2.0 - 0.5;
      const int cz = nearest_cell(zf);
      if (cz < 1 || cz > C - 2) continue;
      ++checked;
      const Vec3 gt = frame.joints[j].world;
      const Vec3 got{jp.x_mm, jp.y_mm, jp.z_mm};
      const double bound = quantization_bound(frame.joints[j].pixel.u, frame.joints[j].pixel.v,
                                              gt.z, p.bin_size_mm / 2.0, ds.meta.intrinsics);
      CHECK((got - gt).norm() <= bound + 1e-3);
      // Reported pixels agree with the reported world position.
      const Vec2 px = project(got, ds.meta.intrinsics);
      CHECK(jp.u == doctest::Approx(px.u).epsilon(1e-9));
      CHECK(jp.v == doctest::Approx(px.v).epsilon(1e-9));
    }
  }
  CHECK(unflagged >= total / 2);
  CHECK(checked >= total / 2);
}

TEST_CASE("stage-two variants and the whole-figure path produce full frames") {
  const Profile p = Profile::tiny();
  const Dataset ds = generate_dataset(p, "humanoid15", 1, 37, 1.0);
  const FrameData& frame = ds.frames[0];
  const int J = static_cast<int>(ds.meta.joint_names.size());

  const PnetFn pnet = [&](const Tensor&, int ou, int ov) {
    return pnet_target(frame.joints, p, ou, ov);
  };

  Rng rng(51);
  const Model vl2d = build_vl2d(J, p, rng);
  const FramePred a = infer_frame_vl2d(frame, ds.meta, p, pnet, vl2d);
  REQUIRE(a.joints.size() == std::size_t(J));
  for (int j = 0; j < J; ++j) CHECK(a.joints[j].id == j);

  const Model co2d = build_co2d(J, p, rng);
  const FramePred b = infer_frame_co2d(frame, ds.meta, p, pnet, co2d);
  REQUIRE(b.joints.size() == std::size_t(J));
  for (const JointPred& jp : b.joints) {
    if (!jp.flagged) CHECK(jp.z_mm > 0.0);
  }

  const Model hol = build_holistic(J, p, rng);
  const FramePred c = infer_frame_holistic(frame, ds.meta, p, gt_locator(), hol);
  REQUIRE(c.joints.size() == std::size_t(J));
}

TEST_CASE("holistic samples square the figure box and keep depth metric") {
  const Profile p = Profile::tiny();
  const int S = p.holistic_xy, D = p.grid_bins;
  const Dataset ds = generate_dataset(p, "humanoid15", 2, 41, 1.0);
  const FrameData& frame = ds.frames[0];

  const auto centers = gt_locator()(frame);
  const HolisticSample s = build_holistic_sample(frame, ds.meta, p, centers);
  CHECK(s.frame_id == frame.id);
  CHECK(s.frame.dim_xy == S);
  REQUIRE(s.column_bins.shape == std::vector<int>({S, S}));
  CHECK(s.frame.anchored);
  CHECK(s.frame.scale_u == s.frame.scale_v);  // squared box
  CHECK(s.frame.depth.num_bins == D);
  CHECK(s.frame.depth.bin_size_mm == p.bin_size_mm);

  // The box covers every located center with its padding.
  double min_u = centers[0][0], max_u = min_u, min_v = centers[0][1], max_v = min_v;
  for (const auto& c : centers) {
    min_u = std::min(min_u, double(c[0]));
    max_u = std::max(max_u, double(c[0]));
    min_v = std::min(min_v, double(c[1]));
    max_v = std::max(max_v, double(c[1]));
  }
  const double span = std::max(max_u - min_u, max_v - min_v);
  const double side = span + 2.0 * std::max(6.0, 0.15 * span);
  CHECK(s.frame.scale_u == doctest::Approx(side / S).epsilon(1e-12));
  CHECK(s.frame.origin_u == doctest::Approx(0.5 * (min_u + max_u) - side / 2).epsilon(1e-9));
  CHECK(s.frame.origin_v == doctest::Approx(0.5 * (min_v + max_v) - side / 2).epsilon(1e-9));

  // gt_fine inverts the grid placement.
  REQUIRE(s.gt_fine.size() == frame.joints.size());
  for (std::size_t j = 0; j < frame.joints.size(); ++j) {
    const double u = s.frame.origin_u + (s.gt_fine[j][0] + 0.5) * s.frame.scale_u;
    const double v = s.frame.origin_v + (s.gt_fine[j][1] + 0.5) * s.frame.scale_v;
    CHECK(u == doctest::Approx(frame.joints[j].pixel.u).epsilon(1e-9));
    CHECK(v == doctest::Approx(frame.joints[j].pixel.v).epsilon(1e-9));
    const double z = s.frame.depth.reference_z +
                     (s.gt_fine[j][2] - s.frame.depth.center_bin() + 0.5) *
                         s.frame.depth.bin_size_mm;
    CHECK(z == doctest::Approx(frame.joints[j].world.z).epsilon(1e-9));
  }

  // holistic_to_world matches the placement it documents.
  const Vec3 w = holistic_to_world(s.frame, 3.0, 5.0, 7.0);
  const Vec3 ref = backproject(s.frame.origin_u + 3.5 * s.frame.scale_u,
                               s.frame.origin_v + 5.5 * s.frame.scale_v,
                               s.frame.depth.reference_z +
                                   (7.0 - s.frame.depth.center_bin() + 0.5) *
                                       s.frame.depth.bin_size_mm,
                               s.frame.intrinsics);
  CHECK(w.x == doctest::Approx(ref.x).epsilon(1e-12));
  CHECK(w.z == doctest::Approx(ref.z).epsilon(1e-12));

  // Window expansion restores the one-hot columns.
  const int offset = p.depth_crop_margin();
  const int C = p.grid_crop_bins;
  const Tensor win = holistic_window(s, offset, p);
  REQUIRE(win.shape == std::vector<int>({1, S, S, C}));
  for (int x = 0; x < S; ++x)
    for (int y = 0; y < S; ++y) {
      const int b = static_cast<int>(s.column_bins.at({x, y}));
      for (int d = 0; d < C; ++d) {
        const float expect = (b >= 0 && b - offset == d) ? 1.0f : -1.0f;
        CHECK(win.at({0, x, y, d}) == expect);
      }
    }

  // Pooled targets peak where the fine coordinate lands after 4x pooling.
  const Tensor tgt = holistic_target(s, offset, int(frame.joints.size()), p);
  REQUIRE(tgt.shape == std::vector<int>({int(frame.joints.size()), S / 4, S / 4, C / 4}));
  for (std::size_t j = 0; j < frame.joints.size(); ++j) {
    const auto& g = s.gt_fine[j];
    const int px = nearest_cell((g[0] - 1.5) / 4.0);
    if (px < 0 || px >= S / 4) continue;
    const int py = nearest_cell((g[1] - 1.5) / 4.0);
    const int pd = nearest_cell((g[2] - offset - 1.5) / 4.0);
    if (py < 0 || py >= S / 4 || pd < 0 || pd >= C / 4) continue;
    const Peak pk = decode_argmax(take_slice(tgt, int(j)));
    CHECK(pk.index == std::vector<int>({px, py, pd}));
  }

  const auto all = build_holistic_samples(ds, p, gt_locator());
  CHECK(all.size() == 2);
  CHECK(all[0].frame_id == ds.frames[0].id);

  // A crop with no readings falls back to the dataset mid depth, unanchored.
  FrameData empty = frame;
  std::fill(empty.depth.valid.begin(), empty.depth.valid.end(), std::uint8_t(0));
  const HolisticSample hs = build_holistic_sample(empty, ds.meta, p, centers);
  CHECK_FALSE(hs.frame.anchored);
  CHECK(hs.frame.depth.reference_z ==
        doctest::Approx(0.5 * (ds.meta.z_min_mm + ds.meta.z_max_mm)));
  for (float b : hs.column_bins.data) CHECK(b == -1.0f);

  CHECK_THROWS(build_holistic_sample(frame, ds.meta, p, {}));
  CHECK_THROWS(holistic_window(s, D, p));
  HolisticSample bad = s;
  bad.column_bins = Tensor(std::vector<int>{S, S - 1});
  CHECK_THROWS(holistic_window(bad, 0, p));
  CHECK_THROWS(holistic_target(s, offset, 99, p));
}
