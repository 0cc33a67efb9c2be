#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vpx/cropset.hpp"
#include "vpx/geometry.hpp"
#include "vpx/metrics.hpp"
#include "vpx/network.hpp"
#include "vpx/profile.hpp"
#include "vpx/synth.hpp"
#include "vpx/tensor.hpp"
#include "vpx/voxelize.hpp"

namespace vpx {

// ---------------------------------------------------------------------------
// Sample assembly
// ---------------------------------------------------------------------------

// Nearest grid cell of a continuous coordinate; cell x spans [x-0.5, x+0.5),
// matching pixel and depth-bin indexing.
inline int nearest_cell(double coord) { return static_cast<int>(std::floor(coord + 0.5)); }

// (1, size, size) crop at the given origin with [z_min, z_max] mapped
// linearly onto [-1, 1], clamped; pixels with no reading map to -1.
Tensor normalized_depth_crop(const DepthMap& map, double z_min, double z_max, int origin_u,
                             int origin_v, int size);

// (size, size) window centered like a local grid, indexed [x][y], normalized
// around reference_z over the grid's depth half-range ((num_bins/2) *
// bin_size), clamped to [-1, 1]; no reading maps to -1. Flat input for the
// 2D stage-two variants.
Tensor normalized_patch(const DepthMap& map, int center_u, int center_v, int size,
                        double reference_z, int num_bins, double bin_size_mm);

// (J, H', W') Gaussian stack for a crop at the given origin; joint pixel u
// maps to heatmap cell (u - origin)/stride - 0.5, so cell centers align with
// pixel centers.
Tensor pnet_target(const std::vector<JointGT>& joints, const Profile& p, int origin_u,
                   int origin_v);

// Depth window of a record's full grid: (1, X, Y, crop_bins) occupancy over
// bins [offset, offset + crop_bins).
Tensor crop_window(const CropRecord& rec, int offset, const Profile& p);

// Grid placement of that window: same voxel-to-world mapping as the full
// grid restricted to the window, expressed as a crop_bins-bin frame.
CropFrame window_frame(const CropFrame& full, int offset, int crop_bins);

// (J, X, Y, crop_bins) Gaussian targets for every joint of the record at the
// given depth offset. Out-of-window joints contribute their (near-zero)
// evaluated tails.
Tensor vnet_target(const CropRecord& rec, int offset, int num_joints, const Profile& p);

// (J * crop_bins, X, Y) depth-sliced variant of vnet_target for the flat
// volumetric head; channel j*crop_bins + d holds depth slice d of joint j.
Tensor vl2d_target(const CropRecord& rec, int offset, int num_joints, const Profile& p);

// (3J) normalized grid coordinates for the coordinate-regression head:
// x, y over the patch ((c + 0.5 - dim/2)/(dim/2)) and z over the full depth
// range, each clamped to [-1.5, 1.5] to tame badly anchored references.
Tensor co2d_target(const CropRecord& rec, int num_joints, const Profile& p);

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
  int batch_size = 4;
  double learning_rate = 1e-4;
  double weight_decay = 5e-4;
  double momentum = 0.9;
  int iterations = 30000;
  int lr_step = 20000;  // iterations at the initial rate before decaying
  double lr_decay = 0.1;
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;
  int log_every = 50;
  int eval_every = 500;  // validation cadence in iterations; 0 disables
};

struct TrainEvent {
  const char* kind = "iter";  // "iter" or "val"
  int iteration = 0;
  double loss = 0.0;
  double learning_rate = 0.0;
  double wall_seconds = 0.0;
};
using TrainLog = std::function<void(const TrainEvent&)>;

struct LossPoint {
  int iteration = 0;
  double loss = 0.0;
};

struct TrainResult {
  Model model;           // parameters after the last iteration
  ParamMap best_params;  // lowest validation loss; final when no validation
  int best_iteration = 0;
  double best_validation_loss = 0.0;
  std::vector<LossPoint> curve;
  double wall_seconds = 0.0;
};

struct Split {
  std::vector<int> train;
  std::vector<int> validation;
};
// Deterministic shuffle-and-cut; the validation share rounds down and the
// training side is never left empty.
Split split_frames(int count, double validation_fraction, std::uint64_t seed);

TrainResult train_pnet(const Dataset& ds, const Profile& p, const TrainConfig& cfg,
                       const TrainLog& log);
TrainResult train_vnet(const CropSet& crops, const Profile& p, const TrainConfig& cfg,
                       const TrainLog& log);
TrainResult train_vl2d(const CropSet& crops, const Profile& p, const TrainConfig& cfg,
                       const TrainLog& log);
TrainResult train_co2d(const CropSet& crops, const Profile& p, const TrainConfig& cfg,
                       const TrainLog& log);

// ---------------------------------------------------------------------------
// 2D localization sources for crop generation and inference
// ---------------------------------------------------------------------------

// Per-joint crop centers in stored-frame pixels.
using Locator = std::function<std::vector<std::array<int, 2>>(const FrameData&)>;

// Peak cell of each heatmap channel scaled back to stored-frame pixels:
// origin + stride * cell.
std::vector<std::array<int, 2>> centers_from_heatmaps(const Tensor& heatmaps, int stride,
                                                      int origin_u, int origin_v);

Locator gt_locator();
// Ground truth plus independent per-axis jitter uniform in [-max_px, max_px],
// forked per frame id.
Locator jitter_locator(int max_px, std::uint64_t seed);
// Decodes the model's heatmaps on the centered crop; the model and profile
// must outlive the returned closure.
Locator pnet_locator(const Model& pnet, const Profile& p, const DatasetMeta& meta);

struct CropGenStats {
  std::vector<std::int64_t> fallback_per_joint;
  std::int64_t records = 0;
};

// One record per frame and joint. The depth anchor falls back from the
// joint's own neighborhood to the torso center to the middle of the dataset
// depth window; any fallback marks the record.
CropSet generate_crops(const Dataset& ds, const Profile& p, const Locator& locate,
                       CropGenStats* stats);

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

struct JointPred {
  int id = 0;
  double u = 0.0, v = 0.0;  // stored-frame pixels of the decoded position
  double x_mm = 0.0, y_mm = 0.0, z_mm = 0.0;
  double confidence = 0.0;
  // Depth anchoring fell back; the position is the 2D ray at the fallback
  // reference depth and confidence is 0.
  bool flagged = false;
};

struct FramePred {
  int frame_id = 0;
  std::vector<JointPred> joints;
};

// Stage closures so tests can substitute oracle networks. The 2D closure
// receives the normalized crop and its origin; the 3D closure receives the
// occupancy window and its grid placement. Model-backed closures ignore the
// extra arguments.
using PnetFn = std::function<Tensor(const Tensor& input, int origin_u, int origin_v)>;
using VnetFn = std::function<Tensor(const Tensor& window, const CropFrame& frame)>;

// The model must outlive the returned closure.
PnetFn pnet_from_model(const Model& m);
VnetFn vnet_from_model(const Model& m);

FramePred infer_frame(const FrameData& frame, const DatasetMeta& meta, const Profile& p,
                      const PnetFn& pnet, const VnetFn& vnet);
FramePred infer_frame_vl2d(const FrameData& frame, const DatasetMeta& meta, const Profile& p,
                           const PnetFn& pnet, const Model& vl2d);
FramePred infer_frame_co2d(const FrameData& frame, const DatasetMeta& meta, const Profile& p,
                           const PnetFn& pnet, const Model& co2d);

// ---------------------------------------------------------------------------
// Whole-figure variant
// ---------------------------------------------------------------------------

// Voxel grid over a resized bounding-box crop: grid cell x covers source
// pixels around origin_u + (x + 0.5) * scale_u.
struct HolisticFrame {
  double origin_u = 0.0, origin_v = 0.0;
  double scale_u = 1.0, scale_v = 1.0;
  DepthDiscretization depth;
  CameraIntrinsics intrinsics;
  int dim_xy = 0;
  bool anchored = true;  // false when the crop held no depth reading
};

// x, y in grid cells, z in full-range bins (all continuous).
Vec3 holistic_to_world(const HolisticFrame& f, double x, double y, double z);

struct HolisticSample {
  int frame_id = 0;
  Tensor column_bins;  // (S, S) occupied bin per column, -1 when empty
  HolisticFrame frame;
  std::vector<std::array<double, 3>> gt_fine;  // full-range grid coordinates
};

// Bounding box of the located joints, padded and squared, resampled to
// holistic_xy cells with nearest-neighbor depth lookup.
HolisticSample build_holistic_sample(const FrameData& frame, const DatasetMeta& meta,
                                     const Profile& p,
                                     const std::vector<std::array<int, 2>>& centers);
std::vector<HolisticSample> build_holistic_samples(const Dataset& ds, const Profile& p,
                                                   const Locator& locate);

// (1, S, S, crop_bins) occupancy window of a sample at a depth offset.
Tensor holistic_window(const HolisticSample& s, int offset, const Profile& p);
// (J, S/4, S/4, crop_bins/4) Gaussian targets on the pooled output grid;
// coarse cell c covers fine cells [4c, 4c + 4).
Tensor holistic_target(const HolisticSample& s, int offset, int num_joints, const Profile& p);

TrainResult train_holistic(const std::vector<HolisticSample>& samples, const Profile& p,
                           const TrainConfig& cfg, const TrainLog& log);
FramePred infer_frame_holistic(const FrameData& frame, const DatasetMeta& meta, const Profile& p,
                               const Locator& locate, const Model& m);

// ---------------------------------------------------------------------------
// Predictions and evaluation
// ---------------------------------------------------------------------------

// JSON-lines, one frame per line:
// {"frame_id": N, "joints": [{"id", "u", "v", "z_mm", "x_mm", "y_mm",
//  "confidence", "flagged"}, ...]}
void write_predictions(const std::string& path, const std::vector<FramePred>& preds);
std::vector<FramePred> read_predictions(const std::string& path);

struct EvalReport {
  MetricTable map10;  // 3D error within 10 cm
  MetricTable pckh;   // 2D error within half the head segment; empty when the
                      // joint set lacks a head or neck
  double flagged_fraction = 0.0;
  int frames = 0;
};

// Predictions are matched to dataset frames by frame id; every predicted
// frame must exist and carry all joints.
EvalReport evaluate_predictions(const std::vector<FramePred>& preds, const Dataset& ds);
std::string eval_report_json(const EvalReport& r);
std::string eval_report_text(const EvalReport& r);

}  // namespace vpx
