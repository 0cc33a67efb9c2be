#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vpx/layers.hpp"
#include "vpx/optimizer.hpp"
#include "vpx/profile.hpp"
#include "vpx/rng.hpp"
#include "vpx/tensor.hpp"

namespace vpx {

enum class NodeKind { input, conv, batchnorm, relu, maxpool, upsample2, add, fc };

struct NodeSpec {
  NodeKind kind = NodeKind::input;
  LayerSpec layer;          // geometry for conv / batchnorm / relu / maxpool
  int fc_out = 0;           // fc output width
  std::vector<int> inputs;  // indices of producer nodes
  std::string param;        // parameter key prefix; empty for stateless nodes
};

// Computation graph in topological order: node 0 is the input placeholder
// and the last node is the output. Parameter keys are "<prefix>.weight",
// ".bias", ".gamma", ".beta", ".running_mean", ".running_var".
struct NetworkSpec {
  std::string arch;     // vnet | pnet | vl2d | co2d | holistic
  std::string profile;  // paper | tiny
  int num_joints = 0;
  int depth_bins = 0;   // per-joint depth bins of the output, where meaningful
  std::vector<int> input_shape;  // unbatched (C, spatial...)
  std::vector<NodeSpec> nodes;

  void validate() const;
};

struct Model {
  NetworkSpec spec;
  ParamMap params;
};

// Per-voxel likelihood over local occupancy grids: eleven same-padded
// stride-1 3D conv blocks, batchnorm+relu after all but the last.
Model build_vnet(int num_joints, const Profile& profile, Rng& rng);

// Per-pixel likelihood over a depth crop at 1/4 resolution: strided stem,
// then an hourglass with residual skips, then a linear 1x1 head.
Model build_pnet(int num_joints, const Profile& profile, Rng& rng);

// Volumetric-output ablation on a flat input: the 3D stack as 2D convs,
// emitting num_joints * grid_crop_bins channels.
Model build_vl2d(int num_joints, const Profile& profile, Rng& rng);

// Coordinate-regression ablation: the first eight blocks as 2D convs, then
// three fully-connected layers down to 3 * num_joints values.
Model build_co2d(int num_joints, const Profile& profile, Rng& rng);

// Whole-figure variant: the 3D stack on a coarse full-body grid with two
// 2x2x2 max-pools, so the output grid is 4x coarser than the input.
Model build_holistic(int num_joints, const Profile& profile, Rng& rng);

Model build_arch(const std::string& arch, int num_joints, const Profile& profile, Rng& rng);

std::int64_t parameter_count(const Model& m);  // trainable parameters only

// Receptive field extent per input spatial axis of one output cell, assuming
// the graph is shift-invariant; fc layers see the whole input.
std::vector<int> receptive_field(const NetworkSpec& spec);

struct NodeCache {
  Tensor output;
  BnCache bn;
  PoolCache pool;
};
struct ForwardCache {
  std::vector<NodeCache> nodes;
};

// Training mode updates batchnorm running stats (hence non-const model) and
// requires a cache; eval mode never mutates the model.
Tensor network_forward(Model& m, const Tensor& input, bool training, ForwardCache* cache);
Tensor network_forward_eval(const Model& m, const Tensor& input);

// Gradients for every trainable parameter, keyed like model.params.
ParamMap network_backward(const Model& m, const ForwardCache& cache, const Tensor& grad_out);

// Checkpoint: a tensor archive with a JSON metadata entry followed by all
// parameters; loading rebuilds the spec and verifies names and shapes.
void save_checkpoint(const std::string& path, const Model& m);
Model load_checkpoint(const std::string& path);

// Rebuilds under the caller's profile, which must carry the stored profile
// name but may override numeric fields the name's defaults would miss.
Model load_checkpoint(const std::string& path, const Profile& profile);

// Checkpoint identity without loading the weights.
struct CheckpointMeta {
  std::string arch;
  std::string profile;
  int num_joints = 0;
};
CheckpointMeta read_checkpoint_meta(const std::string& path);

}  // namespace vpx
