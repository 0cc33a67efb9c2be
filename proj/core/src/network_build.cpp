#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>

#include "vpx/common.hpp"
#include "vpx/network.hpp"

namespace vpx {

namespace {

// Published channel plan of the volumetric stack; div scales it down for the
// tiny profile. Kernels: one 7, seven 5s, three 1s, all same-padded stride 1.
const int kStackChannels[10] = {64, 64, 128, 128, 128, 256, 256, 256, 256, 256};
const int kStackKernels[11] = {7, 5, 5, 5, 5, 5, 5, 5, 1, 1, 1};

int scaled(int channels, int div) { return std::max(1, channels / div); }

// Builds the graph and its parameters together: conv and fc weights are
// N(0, sqrt(2/fan_in)), biases zero, batchnorm at identity.
struct GraphBuilder {
  NetworkSpec spec;
  ParamMap params;
  Rng& rng;
  std::vector<std::vector<int>> shapes;  // unbatched output shape per node

  explicit GraphBuilder(Rng& r) : rng(r) {}

  int push(NodeSpec n, std::vector<int> shape) {
    spec.nodes.push_back(std::move(n));
    shapes.push_back(std::move(shape));
    return static_cast<int>(spec.nodes.size()) - 1;
  }

  int input(std::vector<int> shape) {
    check(spec.nodes.empty(), "input must be the first node");
    NodeSpec n;
    n.kind = NodeKind::input;
    spec.input_shape = shape;
    return push(std::move(n), std::move(shape));
  }

  std::vector<int> spatial_of(int node, int rank) const {
    const auto& s = shapes[node];
    check(static_cast<int>(s.size()) == rank + 1,
          "node shape rank does not match the op's spatial rank");
    return std::vector<int>(s.begin() + 1, s.end());
  }

  int conv(int from, const LayerSpec& layer, const std::string& param) {
    NodeSpec n;
    n.kind = NodeKind::conv;
    n.layer = layer;
    n.inputs = {from};
    n.param = param;
    std::vector<int> shape{layer.out_channels};
    for (int e : layer.output_extents(spatial_of(from, layer.spatial_rank))) shape.push_back(e);
    Tensor w(layer.weight_shape());
    const std::int64_t fan_in = w.numel() / layer.out_channels;
    const float sigma = std::sqrt(2.0f / static_cast<float>(fan_in));
    for (float& v : w.data) v = sigma * rng.normal();
    params[param + ".weight"] = std::move(w);
    params[param + ".bias"] = Tensor({layer.out_channels});
    return push(std::move(n), std::move(shape));
  }

  int bn(int from, int rank, const std::string& param) {
    NodeSpec n;
    n.kind = NodeKind::batchnorm;
    n.layer = LayerSpec::batchnorm(rank, shapes[from][0]);
    n.inputs = {from};
    n.param = param;
    const int c = shapes[from][0];
    params[param + ".gamma"] = Tensor({c}, 1.0f);
    params[param + ".beta"] = Tensor({c});
    params[param + ".running_mean"] = Tensor({c});
    params[param + ".running_var"] = Tensor({c}, 1.0f);
    return push(std::move(n), shapes[from]);
  }

  int relu(int from, int rank) {
    NodeSpec n;
    n.kind = NodeKind::relu;
    n.layer = LayerSpec::relu(rank);
    n.inputs = {from};
    return push(std::move(n), shapes[from]);
  }

  int maxpool(int from, int rank, int window) {
    NodeSpec n;
    n.kind = NodeKind::maxpool;
    n.layer = LayerSpec::maxpool(rank, std::vector<int>(rank, window),
                                 std::vector<int>(rank, window));
    n.inputs = {from};
    std::vector<int> shape{shapes[from][0]};
    for (int e : n.layer.output_extents(spatial_of(from, rank))) shape.push_back(e);
    return push(std::move(n), std::move(shape));
  }

  int upsample2(int from, int rank) {
    check(rank == 2, "upsampling is only used on 2D maps");
    NodeSpec n;
    n.kind = NodeKind::upsample2;
    n.layer = LayerSpec::relu(rank);  // carries the rank only
    n.inputs = {from};
    std::vector<int> shape = shapes[from];
    for (std::size_t i = 1; i < shape.size(); ++i) shape[i] *= 2;
    return push(std::move(n), std::move(shape));
  }

  int add(int a, int b) {
    check(shapes[a] == shapes[b], "residual branches disagree in shape: " +
                                      shape_str(shapes[a]) + " vs " + shape_str(shapes[b]));
    NodeSpec n;
    n.kind = NodeKind::add;
    n.inputs = {a, b};
    return push(std::move(n), shapes[a]);
  }

  int fc(int from, int out, const std::string& param) {
    NodeSpec n;
    n.kind = NodeKind::fc;
    n.fc_out = out;
    n.inputs = {from};
    n.param = param;
    const std::int64_t fan_in = shape_numel(shapes[from]);
    check(fan_in <= (std::int64_t(1) << 31), "fc fan-in implausibly large");
    Tensor w({out, static_cast<int>(fan_in)});
    const float sigma = std::sqrt(2.0f / static_cast<float>(fan_in));
    for (float& v : w.data) v = sigma * rng.normal();
    params[param + ".weight"] = std::move(w);
    params[param + ".bias"] = Tensor({out});
    return push(std::move(n), {out});
  }

  // conv + batchnorm + relu with same padding at stride 1.
  int block(int from, int rank, int out_ch, int kernel, const std::string& name) {
    const int in_ch = shapes[from][0];
    int x = conv(from, LayerSpec::conv_same(rank, in_ch, out_ch, kernel), name);
    x = bn(x, rank, name + ".norm");
    return relu(x, rank);
  }

  Model finish(std::string arch, const Profile& profile, int num_joints, int depth_bins) {
    spec.arch = std::move(arch);
    spec.profile = profile.name;
    spec.num_joints = num_joints;
    spec.depth_bins = depth_bins;
    spec.validate();
    return Model{std::move(spec), std::move(params)};
  }
};

std::string block_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "block%02d", i);
  return buf;
}

// One hourglass level: a skip branch at this resolution plus a pooled inner
// branch, merged by addition after upsampling.
int hourglass(GraphBuilder& g, int x, int depth, int width, const std::string& prefix) {
  const int skip = g.block(x, 2, width, 3, prefix + ".skip");
  int y = g.maxpool(x, 2, 2);
  y = g.block(y, 2, width, 3, prefix + ".down");
  if (depth > 1) {
    y = hourglass(g, y, depth - 1, width, prefix + ".inner");
  } else {
    y = g.block(y, 2, width, 3, prefix + ".bottom");
  }
  y = g.upsample2(y, 2);
  return g.add(skip, y);
}

}  // namespace

Model build_vnet(int num_joints, const Profile& profile, Rng& rng) {
  check(num_joints > 0, "joint count must be positive");
  GraphBuilder g(rng);
  int x = g.input({1, profile.grid_xy, profile.grid_xy, profile.grid_crop_bins});
  for (int i = 0; i < 10; ++i) {
    x = g.block(x, 3, scaled(kStackChannels[i], profile.vnet_div), kStackKernels[i],
                block_name(i + 1));
  }
  x = g.conv(x, LayerSpec::conv_same(3, g.shapes[x][0], num_joints, kStackKernels[10]),
             block_name(11));
  return g.finish("vnet", profile, num_joints, profile.grid_crop_bins);
}

Model build_pnet(int num_joints, const Profile& profile, Rng& rng) {
  check(num_joints > 0, "joint count must be positive");
  GraphBuilder g(rng);
  int x = g.input({1, profile.pnet_input, profile.pnet_input});
  x = g.conv(x, LayerSpec::conv(2, 1, profile.stem_channels, {7, 7}, {2, 2}, {3, 3}),
             "stem.conv1");
  x = g.bn(x, 2, "stem.conv1.norm");
  x = g.relu(x, 2);
  x = g.block(x, 2, profile.hourglass_width, 3, "stem.conv2");
  x = g.maxpool(x, 2, 2);
  x = hourglass(g, x, profile.hourglass_depth, profile.hourglass_width, "hg");
  x = g.block(x, 2, profile.hourglass_width, 3, "head.mix");
  x = g.conv(x, LayerSpec::conv_same(2, profile.hourglass_width, num_joints, 1), "head.out");
  return g.finish("pnet", profile, num_joints, 0);
}

Model build_vl2d(int num_joints, const Profile& profile, Rng& rng) {
  check(num_joints > 0, "joint count must be positive");
  GraphBuilder g(rng);
  int x = g.input({1, profile.grid_xy, profile.grid_xy});
  for (int i = 0; i < 10; ++i) {
    x = g.block(x, 2, scaled(kStackChannels[i], profile.vnet_div), kStackKernels[i],
                block_name(i + 1));
  }
  x = g.conv(x, LayerSpec::conv_same(2, g.shapes[x][0], num_joints * profile.grid_crop_bins,
                                     kStackKernels[10]),
             block_name(11));
  return g.finish("vl2d", profile, num_joints, profile.grid_crop_bins);
}

Model build_co2d(int num_joints, const Profile& profile, Rng& rng) {
  check(num_joints > 0, "joint count must be positive");
  GraphBuilder g(rng);
  int x = g.input({1, profile.grid_xy, profile.grid_xy});
  for (int i = 0; i < 8; ++i) {
    x = g.block(x, 2, scaled(kStackChannels[i], profile.vnet_div), kStackKernels[i],
                block_name(i + 1));
  }
  const int width = scaled(1536, profile.vnet_div);
  x = g.fc(x, width, "fc1");
  x = g.relu(x, 0);  // rank unused for rank-agnostic relu
  x = g.fc(x, width, "fc2");
  x = g.relu(x, 0);
  x = g.fc(x, 3 * num_joints, "fc3");
  return g.finish("co2d", profile, num_joints, profile.grid_bins);
}

Model build_holistic(int num_joints, const Profile& profile, Rng& rng) {
  check(num_joints > 0, "joint count must be positive");
  GraphBuilder g(rng);
  int x = g.input({1, profile.holistic_xy, profile.holistic_xy, profile.grid_crop_bins});
  for (int i = 0; i < 10; ++i) {
    x = g.block(x, 3, scaled(kStackChannels[i], profile.vnet_div), kStackKernels[i],
                block_name(i + 1));
    if (i == 1 || i == 3) x = g.maxpool(x, 3, 2);
  }
  x = g.conv(x, LayerSpec::conv_same(3, g.shapes[x][0], num_joints, kStackKernels[10]),
             block_name(11));
  return g.finish("holistic", profile, num_joints, profile.grid_crop_bins / 4);
}

Model build_arch(const std::string& arch, int num_joints, const Profile& profile, Rng& rng) {
  if (arch == "vnet") return build_vnet(num_joints, profile, rng);
  if (arch == "pnet") return build_pnet(num_joints, profile, rng);
  if (arch == "vl2d") return build_vl2d(num_joints, profile, rng);
  if (arch == "co2d") return build_co2d(num_joints, profile, rng);
  if (arch == "holistic") return build_holistic(num_joints, profile, rng);
  fail("unknown architecture \"" + arch + "\"");
}

std::int64_t parameter_count(const Model& m) {
  std::int64_t n = 0;
  for (const auto& [name, t] : m.params) {
    const bool trainable = name.ends_with(".weight") || name.ends_with(".bias") ||
                           name.ends_with(".gamma") || name.ends_with(".beta");
    if (trainable) n += t.numel();
  }
  return n;
}

std::vector<int> receptive_field(const NetworkSpec& spec) {
  spec.validate();
  const int rank = static_cast<int>(spec.input_shape.size()) - 1;
  struct Field {
    std::vector<double> rf, jump;
    bool global = false;
  };
  std::vector<Field> fields(spec.nodes.size());
  fields[0].rf.assign(rank, 1.0);
  fields[0].jump.assign(rank, 1.0);

  for (std::size_t i = 1; i < spec.nodes.size(); ++i) {
    const NodeSpec& n = spec.nodes[i];
    Field f = fields[n.inputs[0]];
    switch (n.kind) {
      case NodeKind::conv:
      case NodeKind::maxpool: {
        const int off = rank - n.layer.spatial_rank;
        for (int a = 0; a < n.layer.spatial_rank; ++a) {
          f.rf[off + a] += (n.layer.kernel[a] - 1) * f.jump[off + a];
          f.jump[off + a] *= n.layer.stride[a];
        }
        break;
      }
      case NodeKind::upsample2:
        for (double& j : f.jump) j /= 2.0;
        break;
      case NodeKind::add: {
        const Field& other = fields[n.inputs[1]];
        f.global = f.global || other.global;
        for (int a = 0; a < rank; ++a) {
          check(std::abs(f.jump[a] - other.jump[a]) < 1e-9,
                "residual branches disagree in stride; receptive field undefined");
          f.rf[a] = std::max(f.rf[a], other.rf[a]);
        }
        break;
      }
      case NodeKind::fc:
        f.global = true;
        break;
      case NodeKind::batchnorm:
      case NodeKind::relu:
      case NodeKind::input:
        break;
    }
    fields[i] = std::move(f);
  }

  const Field& out = fields.back();
  std::vector<int> rf(rank);
  for (int a = 0; a < rank; ++a) {
    rf[a] = out.global ? spec.input_shape[a + 1]
                       : static_cast<int>(std::lround(out.rf[a]));
  }
  return rf;
}

}  // namespace vpx
