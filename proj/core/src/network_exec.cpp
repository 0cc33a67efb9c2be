#include <algorithm>
#include <sstream>

#include "json.hpp"
#include "vpx/common.hpp"
#include "vpx/network.hpp"
#include "vpx/parallel.hpp"
#include "vpx/tdf.hpp"

namespace vpx {

namespace {

Tensor upsample2_forward(const Tensor& t) {
  check(t.rank() >= 3, "upsample needs at least (C,H,W)");
  std::vector<int> out_shape = t.shape;
  const int w = out_shape.back();
  const int h = out_shape[out_shape.size() - 2];
  out_shape[out_shape.size() - 2] = 2 * h;
  out_shape[out_shape.size() - 1] = 2 * w;
  Tensor out(out_shape);
  const std::int64_t planes = t.numel() / (std::int64_t(h) * w);
  for (std::int64_t p = 0; p < planes; ++p) {
    const float* src = t.ptr() + p * h * w;
    float* dst = out.ptr() + p * 4 * h * w;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const float v = src[y * w + x];
        const std::int64_t base = (std::int64_t(2 * y) * 2 * w) + 2 * x;
        dst[base] = v;
        dst[base + 1] = v;
        dst[base + 2 * w] = v;
        dst[base + 2 * w + 1] = v;
      }
    }
  }
  return out;
}

Tensor upsample2_backward(const Tensor& go) {
  check(go.rank() >= 3, "upsample grad needs at least (C,H,W)");
  const int w2 = go.shape.back();
  const int h2 = go.shape[go.shape.size() - 2];
  check(w2 % 2 == 0 && h2 % 2 == 0, "upsample grad extents must be even");
  std::vector<int> in_shape = go.shape;
  in_shape[in_shape.size() - 2] = h2 / 2;
  in_shape[in_shape.size() - 1] = w2 / 2;
  Tensor gi(in_shape);
  const int h = h2 / 2, w = w2 / 2;
  const std::int64_t planes = gi.numel() / (std::int64_t(h) * w);
  for (std::int64_t p = 0; p < planes; ++p) {
    const float* src = go.ptr() + p * h2 * w2;
    float* dst = gi.ptr() + p * h * w;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::int64_t base = (std::int64_t(2 * y) * w2) + 2 * x;
        dst[y * w + x] = src[base] + src[base + 1] + src[base + w2] + src[base + w2 + 1];
      }
    }
  }
  return gi;
}

// Flat layers: the sample is flattened to w.dim(1) features. `batched` comes
// from the network input, since a (1, F) batch is indistinguishable from an
// unbatched (F) by shape alone.
Tensor fc_forward(const Tensor& in, const Tensor& w, const Tensor& b, bool batched) {
  check(w.rank() == 2, "fc weights must be rank 2");
  const std::int64_t fan_in = w.dim(1);
  const int fan_out = w.dim(0);
  check(b.shape == std::vector<int>{fan_out}, "fc bias shape mismatch");
  const int n = batched ? in.dim(0) : 1;
  check(in.numel() == std::int64_t(n) * fan_in,
        "fc input has " + std::to_string(in.numel()) + " values, expected " +
            std::to_string(n * fan_in));
  Tensor out(batched ? std::vector<int>{n, fan_out} : std::vector<int>{fan_out});
  for (int s = 0; s < n; ++s) {
    const float* x = in.ptr() + s * fan_in;
    float* y = out.ptr() + std::int64_t(s) * fan_out;
    parallel_for(fan_out, [&](std::int64_t o0, std::int64_t o1) {
      for (std::int64_t o = o0; o < o1; ++o) {
        const float* row = w.ptr() + o * fan_in;
        float acc = 0.0f;
        for (std::int64_t i = 0; i < fan_in; ++i) acc += row[i] * x[i];
        y[o] = acc + b.data[o];
      }
    });
  }
  return out;
}

struct FcGrads {
  Tensor input, weights, bias;
};

FcGrads fc_backward(const Tensor& in, const Tensor& w, const Tensor& grad_out, bool batched) {
  const std::int64_t fan_in = w.dim(1);
  const int fan_out = w.dim(0);
  const int n = batched ? in.dim(0) : 1;
  check(grad_out.numel() == std::int64_t(n) * fan_out, "fc grad count mismatch");
  FcGrads g;
  g.input = Tensor(in.shape);
  g.weights = Tensor(w.shape);
  g.bias = Tensor({fan_out});
  for (int s = 0; s < n; ++s) {
    const float* x = in.ptr() + s * fan_in;
    const float* go = grad_out.ptr() + std::int64_t(s) * fan_out;
    float* gx = g.input.ptr() + s * fan_in;
    parallel_for(fan_out, [&](std::int64_t o0, std::int64_t o1) {
      for (std::int64_t o = o0; o < o1; ++o) {
        const float gv = go[o];
        float* wrow = g.weights.ptr() + o * fan_in;
        for (std::int64_t i = 0; i < fan_in; ++i) wrow[i] += gv * x[i];
      }
    });
    for (int o = 0; o < fan_out; ++o) {
      g.bias.data[o] += go[o];
      const float gv = go[o];
      const float* wrow = w.ptr() + std::int64_t(o) * fan_in;
      for (std::int64_t i = 0; i < fan_in; ++i) gx[i] += gv * wrow[i];
    }
  }
  return g;
}

const Tensor& get_param(const ParamMap& params, const std::string& key) {
  auto it = params.find(key);
  check(it != params.end(), "missing parameter \"" + key + "\"");
  return it->second;
}

Tensor& get_param_mut(ParamMap& params, const std::string& key) {
  auto it = params.find(key);
  check(it != params.end(), "missing parameter \"" + key + "\"");
  return it->second;
}

}  // namespace

void NetworkSpec::validate() const {
  check(!nodes.empty() && nodes[0].kind == NodeKind::input,
        "network must start with an input node");
  check(num_joints > 0, "network joint count must be positive");
  check(!input_shape.empty(), "network input shape is empty");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const NodeSpec& n = nodes[i];
    if (n.kind == NodeKind::input) {
      check(i == 0, "only node 0 may be an input");
      continue;
    }
    check(!n.inputs.empty(), "node " + std::to_string(i) + " has no inputs");
    for (int in : n.inputs) {
      check(in >= 0 && in < static_cast<int>(i),
            "node " + std::to_string(i) + " references node " + std::to_string(in) +
                " out of topological order");
    }
  }
}

Tensor network_forward(Model& m, const Tensor& input, bool training, ForwardCache* cache) {
  m.spec.validate();
  const int spec_rank = static_cast<int>(m.spec.input_shape.size());
  const bool batched = input.rank() == spec_rank + 1;
  check(batched || input.rank() == spec_rank,
        "network input rank " + std::to_string(input.rank()) + " does not match spec rank " +
            std::to_string(spec_rank) + " (plus optional batch)");
  for (int a = 0; a < spec_rank; ++a) {
    const int got = input.shape[a + (batched ? 1 : 0)];
    check(got == m.spec.input_shape[a],
          "network input extent " + std::to_string(got) + " on axis " + std::to_string(a) +
              " does not match spec " + std::to_string(m.spec.input_shape[a]));
  }

  ForwardCache local;
  ForwardCache& fc = cache ? *cache : local;
  fc.nodes.assign(m.spec.nodes.size(), NodeCache{});

  for (std::size_t i = 0; i < m.spec.nodes.size(); ++i) {
    const NodeSpec& n = m.spec.nodes[i];
    NodeCache& nc = fc.nodes[i];
    switch (n.kind) {
      case NodeKind::input:
        nc.output = input;
        break;
      case NodeKind::conv:
        nc.output = conv_forward(fc.nodes[n.inputs[0]].output, n.layer,
                                 get_param(m.params, n.param + ".weight"),
                                 get_param(m.params, n.param + ".bias"));
        break;
      case NodeKind::batchnorm:
        nc.output = batchnorm_forward(fc.nodes[n.inputs[0]].output, n.layer,
                                      get_param(m.params, n.param + ".gamma"),
                                      get_param(m.params, n.param + ".beta"),
                                      get_param_mut(m.params, n.param + ".running_mean"),
                                      get_param_mut(m.params, n.param + ".running_var"),
                                      training, cache ? &nc.bn : nullptr);
        break;
      case NodeKind::relu:
        nc.output = relu_forward(fc.nodes[n.inputs[0]].output);
        break;
      case NodeKind::maxpool:
        nc.output = maxpool_forward(fc.nodes[n.inputs[0]].output, n.layer,
                                    cache ? &nc.pool : nullptr);
        break;
      case NodeKind::upsample2:
        nc.output = upsample2_forward(fc.nodes[n.inputs[0]].output);
        break;
      case NodeKind::add: {
        const Tensor& a = fc.nodes[n.inputs[0]].output;
        const Tensor& b = fc.nodes[n.inputs[1]].output;
        check(a.shape == b.shape, "add operands differ in shape");
        nc.output = a;
        for (std::size_t k = 0; k < b.data.size(); ++k) nc.output.data[k] += b.data[k];
        break;
      }
      case NodeKind::fc:
        nc.output = fc_forward(fc.nodes[n.inputs[0]].output,
                               get_param(m.params, n.param + ".weight"),
                               get_param(m.params, n.param + ".bias"), batched);
        break;
    }
  }
  return fc.nodes.back().output;
}

Tensor network_forward_eval(const Model& m, const Tensor& input) {
  // Eval mode mutates nothing; the cast only satisfies the shared signature.
  return network_forward(const_cast<Model&>(m), input, false, nullptr);
}

ParamMap network_backward(const Model& m, const ForwardCache& cache, const Tensor& grad_out) {
  check(cache.nodes.size() == m.spec.nodes.size(),
        "forward cache does not match the network");
  const std::size_t count = m.spec.nodes.size();
  check(grad_out.shape == cache.nodes.back().output.shape,
        "output grad shape " + shape_str(grad_out.shape) + " does not match forward output " +
            shape_str(cache.nodes.back().output.shape));
  const int spec_rank = static_cast<int>(m.spec.input_shape.size());
  const bool batched = cache.nodes[0].output.rank() == spec_rank + 1;

  std::vector<Tensor> grads(count);
  grads[count - 1] = grad_out;
  auto accumulate = [&](int idx, Tensor&& g) {
    if (grads[idx].shape.empty()) {
      grads[idx] = std::move(g);
    } else {
      check(grads[idx].shape == g.shape, "fan-in gradients differ in shape");
      for (std::size_t k = 0; k < g.data.size(); ++k) grads[idx].data[k] += g.data[k];
    }
  };

  ParamMap pg;
  for (std::size_t i = count - 1; i >= 1; --i) {
    if (grads[i].shape.empty()) continue;  // branch never reached the output
    const NodeSpec& n = m.spec.nodes[i];
    const Tensor& g = grads[i];
    switch (n.kind) {
      case NodeKind::conv: {
        ConvGrads cg = conv_backward(cache.nodes[n.inputs[0]].output, n.layer,
                                     get_param(m.params, n.param + ".weight"), g);
        pg[n.param + ".weight"] = std::move(cg.weights);
        pg[n.param + ".bias"] = std::move(cg.bias);
        accumulate(n.inputs[0], std::move(cg.input));
        break;
      }
      case NodeKind::batchnorm: {
        check(cache.nodes[i].bn.per_channel > 0,
              "batchnorm backward needs a training-mode forward cache");
        BnGrads bg = batchnorm_backward(g, n.layer, get_param(m.params, n.param + ".gamma"),
                                        cache.nodes[i].bn);
        pg[n.param + ".gamma"] = std::move(bg.gamma);
        pg[n.param + ".beta"] = std::move(bg.beta);
        accumulate(n.inputs[0], std::move(bg.input));
        break;
      }
      case NodeKind::relu:
        accumulate(n.inputs[0], relu_backward(cache.nodes[n.inputs[0]].output, g));
        break;
      case NodeKind::maxpool:
        accumulate(n.inputs[0], maxpool_backward(g, n.layer, cache.nodes[i].pool));
        break;
      case NodeKind::upsample2:
        accumulate(n.inputs[0], upsample2_backward(g));
        break;
      case NodeKind::add: {
        Tensor copy = g;
        accumulate(n.inputs[0], std::move(copy));
        Tensor copy2 = g;
        accumulate(n.inputs[1], std::move(copy2));
        break;
      }
      case NodeKind::fc: {
        FcGrads fg = fc_backward(cache.nodes[n.inputs[0]].output,
                                 get_param(m.params, n.param + ".weight"), g, batched);
        pg[n.param + ".weight"] = std::move(fg.weights);
        pg[n.param + ".bias"] = std::move(fg.bias);
        accumulate(n.inputs[0], std::move(fg.input));
        break;
      }
      case NodeKind::input:
        break;
    }
  }
  return pg;
}

void save_checkpoint(const std::string& path, const Model& m) {
  nlohmann::json meta;
  meta["arch"] = m.spec.arch;
  meta["profile"] = m.spec.profile;
  meta["num_joints"] = m.spec.num_joints;
  const std::string text = meta.dump();
  Tensor mt({static_cast<int>(text.size())});
  for (std::size_t i = 0; i < text.size(); ++i) {
    mt.data[i] = static_cast<float>(static_cast<unsigned char>(text[i]));
  }
  TensorArchive arc;
  arc.emplace_back("__meta__", std::move(mt));
  for (const auto& [name, t] : m.params) arc.emplace_back(name, t);
  save_archive(path, arc);
}

namespace {

CheckpointMeta parse_checkpoint_meta(const TensorArchive& arc, const std::string& path) {
  const Tensor* mt = find_entry(arc, "__meta__");
  check(mt != nullptr, path + " has no metadata entry; not a checkpoint");
  std::string text(mt->data.size(), '\0');
  for (std::size_t i = 0; i < mt->data.size(); ++i) {
    text[i] = static_cast<char>(static_cast<unsigned char>(mt->data[i]));
  }
  nlohmann::json meta = nlohmann::json::parse(text, nullptr, false);
  check(!meta.is_discarded(), path + " holds unparsable checkpoint metadata");
  CheckpointMeta out;
  try {
    out.arch = meta.at("arch").get<std::string>();
    out.profile = meta.at("profile").get<std::string>();
    out.num_joints = meta.at("num_joints").get<int>();
  } catch (const nlohmann::json::exception& e) {
    fail(path + " checkpoint metadata is incomplete: " + e.what());
  }
  return out;
}

Model load_from_archive(const TensorArchive& arc, const std::string& path,
                        const CheckpointMeta& meta, const Profile& profile) {
  Rng rng(0);
  Model m = build_arch(meta.arch, meta.num_joints, profile, rng);
  std::size_t applied = 0;
  for (const auto& [name, t] : arc) {
    if (name == "__meta__") continue;
    auto it = m.params.find(name);
    check(it != m.params.end(), path + " holds unknown parameter \"" + name + "\"");
    check(it->second.shape == t.shape,
          "parameter \"" + name + "\" in " + path + " has shape " + shape_str(t.shape) +
              ", expected " + shape_str(it->second.shape));
    it->second = t;
    ++applied;
  }
  check(applied == m.params.size(), path + " is missing " +
                                        std::to_string(m.params.size() - applied) +
                                        " parameters for arch " + meta.arch);
  return m;
}

}  // namespace

CheckpointMeta read_checkpoint_meta(const std::string& path) {
  return parse_checkpoint_meta(load_archive(path), path);
}

Model load_checkpoint(const std::string& path) {
  const TensorArchive arc = load_archive(path);
  const CheckpointMeta meta = parse_checkpoint_meta(arc, path);
  return load_from_archive(arc, path, meta, Profile::by_name(meta.profile));
}

Model load_checkpoint(const std::string& path, const Profile& profile) {
  const TensorArchive arc = load_archive(path);
  const CheckpointMeta meta = parse_checkpoint_meta(arc, path);
  check(meta.profile == profile.name, path + " was trained under profile '" + meta.profile +
                                          "', not '" + profile.name + "'");
  return load_from_archive(arc, path, meta, profile);
}

}  // namespace vpx
