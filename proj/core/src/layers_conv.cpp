#include <algorithm>
#include <cstring>

#include "vpx/common.hpp"
#include "vpx/layers.hpp"
#include "vpx/parallel.hpp"

namespace vpx {

namespace {

// Widest inner (last axis) extent the blocked kernel handles with its stack
// accumulators; larger tensors take the reference path.
constexpr int kMaxInner = 512;

std::string axis_name(int spatial_rank, int axis) {
  static const char* names2[] = {"H", "W"};
  static const char* names3[] = {"X", "Y", "D"};
  return spatial_rank == 2 ? names2[axis] : names3[axis];
}

// Internal geometry, normalized to three spatial axes. 2D ops get a leading
// unit axis with kernel 1 / stride 1 / pad 0, which costs nothing in the
// loops below and keeps a single kernel for both ranks.
struct ConvPlan {
  bool batched = false;
  int n = 1, ci = 0, co = 0;
  int in[3], k[3], s[3], p[3], out[3], ip[3];
  std::int64_t in_sp = 0, out_sp = 0, ip_sp = 0;
};

ConvPlan make_plan(const Tensor& input, const LayerSpec& spec) {
  spec.validate();
  check(spec.kind == LayerKind::conv, "make_plan expects a conv spec");
  const BatchView bv = split_batch(input, spec.spatial_rank, spec.in_channels, "conv input");
  const std::vector<int> out = spec.output_extents(bv.spatial);

  ConvPlan pl;
  pl.batched = bv.batched;
  pl.n = bv.batch;
  pl.ci = spec.in_channels;
  pl.co = spec.out_channels;
  const int off = 3 - spec.spatial_rank;
  for (int a = 0; a < 3; ++a) {
    pl.in[a] = 1;
    pl.k[a] = 1;
    pl.s[a] = 1;
    pl.p[a] = 0;
    pl.out[a] = 1;
  }
  for (int a = 0; a < spec.spatial_rank; ++a) {
    pl.in[off + a] = bv.spatial[a];
    pl.k[off + a] = spec.kernel[a];
    pl.s[off + a] = spec.stride[a];
    pl.p[off + a] = spec.padding[a];
    pl.out[off + a] = out[a];
  }
  for (int a = 0; a < 3; ++a) pl.ip[a] = pl.in[a] + 2 * pl.p[a];
  pl.in_sp = std::int64_t(pl.in[0]) * pl.in[1] * pl.in[2];
  pl.out_sp = std::int64_t(pl.out[0]) * pl.out[1] * pl.out[2];
  pl.ip_sp = std::int64_t(pl.ip[0]) * pl.ip[1] * pl.ip[2];
  return pl;
}

void check_conv_params(const ConvPlan& pl, const LayerSpec& spec, const Tensor& weights,
                       const Tensor& bias) {
  check(weights.shape == spec.weight_shape(),
        "conv weights shape " + shape_str(weights.shape) + " does not match spec shape " +
            shape_str(spec.weight_shape()));
  check(bias.shape == std::vector<int>{pl.co},
        "conv bias shape " + shape_str(bias.shape) + " does not match (" + std::to_string(pl.co) +
            ")");
}

// Copies one sample into the zero-padded scratch buffer (ci, XP, YP, DP).
void fill_padded(const float* in, float* pad, const ConvPlan& pl) {
  std::memset(pad, 0, sizeof(float) * std::size_t(pl.ci) * pl.ip_sp);
  for (int ci = 0; ci < pl.ci; ++ci) {
    for (int x = 0; x < pl.in[0]; ++x) {
      for (int y = 0; y < pl.in[1]; ++y) {
        const float* src = in + ((std::int64_t(ci) * pl.in[0] + x) * pl.in[1] + y) * pl.in[2];
        float* dst = pad + ((std::int64_t(ci) * pl.ip[0] + x + pl.p[0]) * pl.ip[1] + y + pl.p[1]) *
                               pl.ip[2] +
                     pl.p[2];
        std::memcpy(dst, src, sizeof(float) * std::size_t(pl.in[2]));
      }
    }
  }
}

// Blocked direct kernel: BK output channels share every loaded input value,
// and the inner loop runs along the contiguous last axis.
template <int BK>
void conv_block(const float* pad, const float* w, const float* bias, float* out,
                const ConvPlan& pl, int co0) {
  const std::int64_t wstride = std::int64_t(pl.ci) * pl.k[0] * pl.k[1] * pl.k[2];
  const int od = pl.out[2];
  float acc[BK][kMaxInner];
  for (int x = 0; x < pl.out[0]; ++x) {
    for (int y = 0; y < pl.out[1]; ++y) {
      for (int c = 0; c < BK; ++c) {
        for (int d = 0; d < od; ++d) acc[c][d] = 0.0f;
      }
      for (int ci = 0; ci < pl.ci; ++ci) {
        for (int kx = 0; kx < pl.k[0]; ++kx) {
          const std::int64_t plane =
              (std::int64_t(ci) * pl.ip[0] + x * pl.s[0] + kx) * pl.ip[1];
          for (int ky = 0; ky < pl.k[1]; ++ky) {
            const float* row = pad + (plane + y * pl.s[1] + ky) * pl.ip[2];
            const float* wp =
                w + (((std::int64_t(co0) * pl.ci + ci) * pl.k[0] + kx) * pl.k[1] + ky) * pl.k[2];
            for (int kz = 0; kz < pl.k[2]; ++kz) {
              float wv[BK];
              for (int c = 0; c < BK; ++c) wv[c] = wp[c * wstride + kz];
              const float* r = row + kz;
              if (pl.s[2] == 1) {
                for (int d = 0; d < od; ++d) {
                  const float v = r[d];
                  for (int c = 0; c < BK; ++c) acc[c][d] += wv[c] * v;
                }
              } else {
                for (int d = 0; d < od; ++d) {
                  const float v = r[std::int64_t(d) * pl.s[2]];
                  for (int c = 0; c < BK; ++c) acc[c][d] += wv[c] * v;
                }
              }
            }
          }
        }
      }
      for (int c = 0; c < BK; ++c) {
        const float b = bias[co0 + c];
        float* o = out + (std::int64_t(co0 + c) * pl.out[0] + x) * pl.out[1] * std::int64_t(od) +
                   std::int64_t(y) * od;
        for (int d = 0; d < od; ++d) o[d] = acc[c][d] + b;
      }
    }
  }
}

void conv_sample(const float* pad, const float* w, const float* bias, float* out,
                 const ConvPlan& pl) {
  const int blocks = (pl.co + 3) / 4;
  parallel_for(blocks, [&](std::int64_t b0, std::int64_t b1) {
    for (std::int64_t b = b0; b < b1; ++b) {
      const int co0 = static_cast<int>(b) * 4;
      switch (std::min(4, pl.co - co0)) {
        case 1: conv_block<1>(pad, w, bias, out, pl, co0); break;
        case 2: conv_block<2>(pad, w, bias, out, pl, co0); break;
        case 3: conv_block<3>(pad, w, bias, out, pl, co0); break;
        default: conv_block<4>(pad, w, bias, out, pl, co0); break;
      }
    }
  });
}

// Reference path for inner extents beyond the block kernel's accumulators.
void conv_sample_ref(const float* pad, const float* w, const float* bias, float* out,
                     const ConvPlan& pl) {
  for (int co = 0; co < pl.co; ++co) {
    for (int x = 0; x < pl.out[0]; ++x) {
      for (int y = 0; y < pl.out[1]; ++y) {
        for (int d = 0; d < pl.out[2]; ++d) {
          float acc = bias[co];
          for (int ci = 0; ci < pl.ci; ++ci) {
            for (int kx = 0; kx < pl.k[0]; ++kx) {
              for (int ky = 0; ky < pl.k[1]; ++ky) {
                const float* row =
                    pad + ((std::int64_t(ci) * pl.ip[0] + x * pl.s[0] + kx) * pl.ip[1] +
                           y * pl.s[1] + ky) *
                              pl.ip[2] +
                    std::int64_t(d) * pl.s[2];
                const float* wp =
                    w +
                    (((std::int64_t(co) * pl.ci + ci) * pl.k[0] + kx) * pl.k[1] + ky) * pl.k[2];
                for (int kz = 0; kz < pl.k[2]; ++kz) acc += wp[kz] * row[kz];
              }
            }
          }
          out[((std::int64_t(co) * pl.out[0] + x) * pl.out[1] + y) * pl.out[2] + d] = acc;
        }
      }
    }
  }
}

}  // namespace

LayerSpec LayerSpec::conv(int spatial_rank, int in_ch, int out_ch, std::vector<int> kernel,
                          std::vector<int> stride, std::vector<int> padding) {
  LayerSpec s;
  s.kind = LayerKind::conv;
  s.spatial_rank = spatial_rank;
  s.in_channels = in_ch;
  s.out_channels = out_ch;
  s.kernel = std::move(kernel);
  s.stride = std::move(stride);
  s.padding = std::move(padding);
  s.validate();
  return s;
}

LayerSpec LayerSpec::conv_same(int spatial_rank, int in_ch, int out_ch, int kernel) {
  std::vector<int> k(spatial_rank, kernel);
  std::vector<int> one(spatial_rank, 1);
  std::vector<int> pad(spatial_rank, (kernel - 1) / 2);
  return conv(spatial_rank, in_ch, out_ch, std::move(k), std::move(one), std::move(pad));
}

LayerSpec LayerSpec::batchnorm(int spatial_rank, int channels) {
  LayerSpec s;
  s.kind = LayerKind::batchnorm;
  s.spatial_rank = spatial_rank;
  s.in_channels = channels;
  s.out_channels = channels;
  s.validate();
  return s;
}

LayerSpec LayerSpec::relu(int spatial_rank) {
  LayerSpec s;
  s.kind = LayerKind::relu;
  s.spatial_rank = spatial_rank;
  return s;
}

LayerSpec LayerSpec::maxpool(int spatial_rank, std::vector<int> window, std::vector<int> stride) {
  LayerSpec s;
  s.kind = LayerKind::maxpool;
  s.spatial_rank = spatial_rank;
  s.kernel = std::move(window);
  s.stride = std::move(stride);
  s.validate();
  return s;
}

void LayerSpec::validate() const {
  check(spatial_rank == 2 || spatial_rank == 3,
        "spatial rank must be 2 or 3, got " + std::to_string(spatial_rank));
  auto check_per_axis = [&](const std::vector<int>& v, const char* what) {
    check(static_cast<int>(v.size()) == spatial_rank,
          std::string(what) + " must have one entry per spatial axis");
  };
  switch (kind) {
    case LayerKind::conv: {
      check(in_channels > 0 && out_channels > 0, "conv channel counts must be positive");
      check_per_axis(kernel, "kernel");
      check_per_axis(stride, "stride");
      check_per_axis(padding, "padding");
      for (int a = 0; a < spatial_rank; ++a) {
        check(kernel[a] >= 1 && kernel[a] % 2 == 1,
              "conv kernel extent on axis " + axis_name(spatial_rank, a) + " must be odd, got " +
                  std::to_string(kernel[a]));
        check(stride[a] >= 1, "conv stride on axis " + axis_name(spatial_rank, a) +
                                  " must be >= 1, got " + std::to_string(stride[a]));
        check(padding[a] >= 0 && padding[a] <= kernel[a] - 1,
              "conv padding on axis " + axis_name(spatial_rank, a) + " must be in [0, kernel-1]");
      }
      break;
    }
    case LayerKind::batchnorm:
      check(in_channels > 0, "batchnorm channel count must be positive");
      break;
    case LayerKind::relu:
      break;
    case LayerKind::maxpool: {
      check_per_axis(kernel, "window");
      check_per_axis(stride, "stride");
      for (int a = 0; a < spatial_rank; ++a) {
        check(kernel[a] >= 1, "pool window on axis " + axis_name(spatial_rank, a) +
                                  " must be >= 1, got " + std::to_string(kernel[a]));
        check(stride[a] >= 1, "pool stride on axis " + axis_name(spatial_rank, a) +
                                  " must be >= 1, got " + std::to_string(stride[a]));
      }
      break;
    }
  }
}

std::vector<int> LayerSpec::output_extents(const std::vector<int>& in_spatial) const {
  check(static_cast<int>(in_spatial.size()) == spatial_rank,
        "input spatial rank " + std::to_string(in_spatial.size()) + " does not match spec rank " +
            std::to_string(spatial_rank));
  std::vector<int> out(spatial_rank);
  for (int a = 0; a < spatial_rank; ++a) {
    const int pad = kind == LayerKind::conv ? padding[a] : 0;
    const int span = in_spatial[a] + 2 * pad - kernel[a];
    check(span >= 0, "kernel extent " + std::to_string(kernel[a]) + " exceeds padded input " +
                         std::to_string(in_spatial[a] + 2 * pad) + " on axis " +
                         axis_name(spatial_rank, a));
    out[a] = span / stride[a] + 1;
  }
  return out;
}

std::vector<int> LayerSpec::weight_shape() const {
  check(kind == LayerKind::conv, "only conv layers carry weights");
  std::vector<int> s{out_channels, in_channels};
  s.insert(s.end(), kernel.begin(), kernel.end());
  return s;
}

BatchView split_batch(const Tensor& t, int spatial_rank, int expect_channels, const char* what) {
  BatchView bv;
  if (t.rank() == spatial_rank + 1) {
    bv.batched = false;
    bv.batch = 1;
    bv.channels = t.shape[0];
    bv.spatial.assign(t.shape.begin() + 1, t.shape.end());
  } else if (t.rank() == spatial_rank + 2) {
    bv.batched = true;
    bv.batch = t.shape[0];
    bv.channels = t.shape[1];
    bv.spatial.assign(t.shape.begin() + 2, t.shape.end());
  } else {
    fail(std::string(what) + " has rank " + std::to_string(t.rank()) +
         ", expected spatial rank " + std::to_string(spatial_rank) +
         " plus channels and optional batch");
  }
  if (expect_channels > 0) {
    check(bv.channels == expect_channels, std::string(what) + " has " +
                                              std::to_string(bv.channels) +
                                              " channels, spec expects " +
                                              std::to_string(expect_channels));
  }
  return bv;
}

Tensor conv_forward(const Tensor& input, const LayerSpec& spec, const Tensor& weights,
                    const Tensor& bias) {
  const ConvPlan pl = make_plan(input, spec);
  check_conv_params(pl, spec, weights, bias);

  std::vector<int> out_shape;
  if (pl.batched) out_shape.push_back(pl.n);
  out_shape.push_back(pl.co);
  const int off = 3 - spec.spatial_rank;
  for (int a = off; a < 3; ++a) out_shape.push_back(pl.out[a]);
  Tensor out(out_shape);

  std::vector<float> pad(std::size_t(pl.ci) * pl.ip_sp);
  for (int n = 0; n < pl.n; ++n) {
    fill_padded(input.ptr() + std::int64_t(n) * pl.ci * pl.in_sp, pad.data(), pl);
    float* o = out.ptr() + std::int64_t(n) * pl.co * pl.out_sp;
    if (pl.out[2] <= kMaxInner) {
      conv_sample(pad.data(), weights.ptr(), bias.ptr(), o, pl);
    } else {
      conv_sample_ref(pad.data(), weights.ptr(), bias.ptr(), o, pl);
    }
  }
  return out;
}

namespace {

// Dot product along the contiguous axis, accumulated in float lanes and
// folded to double once per row.
double row_dot(const float* a, const float* b, int n, int bstride) {
  float acc = 0.0f;
  if (bstride == 1) {
    for (int i = 0; i < n; ++i) acc += a[i] * b[i];
  } else {
    for (int i = 0; i < n; ++i) acc += a[i] * b[std::int64_t(i) * bstride];
  }
  return static_cast<double>(acc);
}

void grad_weights_sample(const float* pad, const float* go, double* gw, const ConvPlan& pl) {
  parallel_for(pl.co, [&](std::int64_t c0, std::int64_t c1) {
    for (int co = static_cast<int>(c0); co < c1; ++co) {
      for (int ci = 0; ci < pl.ci; ++ci) {
        for (int kx = 0; kx < pl.k[0]; ++kx) {
          for (int ky = 0; ky < pl.k[1]; ++ky) {
            for (int kz = 0; kz < pl.k[2]; ++kz) {
              double acc = 0.0;
              for (int x = 0; x < pl.out[0]; ++x) {
                const std::int64_t plane =
                    (std::int64_t(ci) * pl.ip[0] + x * pl.s[0] + kx) * pl.ip[1];
                for (int y = 0; y < pl.out[1]; ++y) {
                  const float* in_row = pad + (plane + y * pl.s[1] + ky) * pl.ip[2] + kz;
                  const float* go_row =
                      go + (std::int64_t(co) * pl.out[0] + x) * pl.out[1] * pl.out[2] +
                      std::int64_t(y) * pl.out[2];
                  acc += row_dot(go_row, in_row, pl.out[2], pl.s[2]);
                }
              }
              gw[(((std::int64_t(co) * pl.ci + ci) * pl.k[0] + kx) * pl.k[1] + ky) * pl.k[2] +
                 kz] += acc;
            }
          }
        }
      }
    }
  });
}

void grad_input_sample_generic(const float* go, const float* w, float* gi_pad,
                               const ConvPlan& pl) {
  parallel_for(pl.ci, [&](std::int64_t ci0, std::int64_t ci1) {
    for (int ci = static_cast<int>(ci0); ci < ci1; ++ci) {
      for (int co = 0; co < pl.co; ++co) {
        for (int x = 0; x < pl.out[0]; ++x) {
          for (int y = 0; y < pl.out[1]; ++y) {
            const float* go_row =
                go + (std::int64_t(co) * pl.out[0] + x) * pl.out[1] * pl.out[2] +
                std::int64_t(y) * pl.out[2];
            for (int kx = 0; kx < pl.k[0]; ++kx) {
              const std::int64_t plane =
                  (std::int64_t(ci) * pl.ip[0] + x * pl.s[0] + kx) * pl.ip[1];
              for (int ky = 0; ky < pl.k[1]; ++ky) {
                float* gi_row = gi_pad + (plane + y * pl.s[1] + ky) * pl.ip[2];
                const float* wp =
                    w +
                    (((std::int64_t(co) * pl.ci + ci) * pl.k[0] + kx) * pl.k[1] + ky) * pl.k[2];
                for (int d = 0; d < pl.out[2]; ++d) {
                  const float g = go_row[d];
                  float* base = gi_row + std::int64_t(d) * pl.s[2];
                  for (int kz = 0; kz < pl.k[2]; ++kz) base[kz] += wp[kz] * g;
                }
              }
            }
          }
        }
      }
    }
  });
}

}  // namespace

ConvGrads conv_backward(const Tensor& input, const LayerSpec& spec, const Tensor& weights,
                        const Tensor& grad_out) {
  const ConvPlan pl = make_plan(input, spec);
  check(weights.shape == spec.weight_shape(),
        "conv weights shape " + shape_str(weights.shape) + " does not match spec shape " +
            shape_str(spec.weight_shape()));
  const BatchView gv = split_batch(grad_out, spec.spatial_rank, spec.out_channels, "conv grad");
  check(gv.batched == pl.batched && gv.batch == pl.n,
        "conv grad batching does not match the cached input");
  {
    const int off = 3 - spec.spatial_rank;
    for (int a = 0; a < spec.spatial_rank; ++a) {
      check(gv.spatial[a] == pl.out[off + a],
            "conv grad extent " + std::to_string(gv.spatial[a]) + " on axis " +
                axis_name(spec.spatial_rank, a) + " does not match forward output " +
                std::to_string(pl.out[off + a]));
    }
  }

  ConvGrads grads;
  grads.input = Tensor(input.shape);
  grads.weights = Tensor(weights.shape);
  grads.bias = Tensor({pl.co});

  // Bias: plain sums over batch and spatial axes.
  for (int co = 0; co < pl.co; ++co) {
    double acc = 0.0;
    for (int n = 0; n < pl.n; ++n) {
      const float* g = grad_out.ptr() + (std::int64_t(n) * pl.co + co) * pl.out_sp;
      for (std::int64_t i = 0; i < pl.out_sp; ++i) acc += g[i];
    }
    grads.bias.data[co] = static_cast<float>(acc);
  }

  // Weights: one padded sample at a time, accumulated in double.
  std::vector<double> gw(weights.data.size(), 0.0);
  std::vector<float> pad(std::size_t(pl.ci) * pl.ip_sp);
  for (int n = 0; n < pl.n; ++n) {
    fill_padded(input.ptr() + std::int64_t(n) * pl.ci * pl.in_sp, pad.data(), pl);
    grad_weights_sample(pad.data(), grad_out.ptr() + std::int64_t(n) * pl.co * pl.out_sp,
                        gw.data(), pl);
  }
  for (std::size_t i = 0; i < gw.size(); ++i) grads.weights.data[i] = static_cast<float>(gw[i]);

  const bool unit_stride = spec.stride == std::vector<int>(spec.spatial_rank, 1);
  if (unit_stride) {
    // Stride 1: grad wrt input is a correlation of grad_out with the
    // spatially flipped, channel-transposed weights, padded by k-1-p.
    std::vector<int> wt_shape{pl.ci, pl.co};
    wt_shape.insert(wt_shape.end(), spec.kernel.begin(), spec.kernel.end());
    Tensor wt(wt_shape);
    const std::int64_t ksp = std::int64_t(pl.k[0]) * pl.k[1] * pl.k[2];
    for (int co = 0; co < pl.co; ++co) {
      for (int ci = 0; ci < pl.ci; ++ci) {
        for (int kx = 0; kx < pl.k[0]; ++kx) {
          for (int ky = 0; ky < pl.k[1]; ++ky) {
            for (int kz = 0; kz < pl.k[2]; ++kz) {
              const std::int64_t src =
                  (((std::int64_t(co) * pl.ci + ci) * pl.k[0] + kx) * pl.k[1] + ky) * pl.k[2] +
                  kz;
              const std::int64_t dst =
                  (std::int64_t(ci) * pl.co + co) * ksp +
                  (std::int64_t(pl.k[0] - 1 - kx) * pl.k[1] + (pl.k[1] - 1 - ky)) * pl.k[2] +
                  (pl.k[2] - 1 - kz);
              wt.data[dst] = weights.data[src];
            }
          }
        }
      }
    }
    std::vector<int> tpad(spec.spatial_rank);
    for (int a = 0; a < spec.spatial_rank; ++a) tpad[a] = spec.kernel[a] - 1 - spec.padding[a];
    const LayerSpec tspec =
        LayerSpec::conv(spec.spatial_rank, pl.co, pl.ci, spec.kernel,
                        std::vector<int>(spec.spatial_rank, 1), tpad);
    const Tensor zero_bias({pl.ci});
    grads.input = conv_forward(grad_out, tspec, wt, zero_bias);
  } else {
    std::vector<float> gi_pad(std::size_t(pl.ci) * pl.ip_sp);
    for (int n = 0; n < pl.n; ++n) {
      std::fill(gi_pad.begin(), gi_pad.end(), 0.0f);
      grad_input_sample_generic(grad_out.ptr() + std::int64_t(n) * pl.co * pl.out_sp,
                                weights.ptr(), gi_pad.data(), pl);
      float* gi = grads.input.ptr() + std::int64_t(n) * pl.ci * pl.in_sp;
      for (int ci = 0; ci < pl.ci; ++ci) {
        for (int x = 0; x < pl.in[0]; ++x) {
          for (int y = 0; y < pl.in[1]; ++y) {
            const float* src = gi_pad.data() +
                               ((std::int64_t(ci) * pl.ip[0] + x + pl.p[0]) * pl.ip[1] + y +
                                pl.p[1]) *
                                   pl.ip[2] +
                               pl.p[2];
            float* dst = gi + ((std::int64_t(ci) * pl.in[0] + x) * pl.in[1] + y) * pl.in[2];
            std::memcpy(dst, src, sizeof(float) * std::size_t(pl.in[2]));
          }
        }
      }
    }
  }
  return grads;
}

}  // namespace vpx
