#include <cmath>
#include <limits>

#include "vpx/common.hpp"
#include "vpx/layers.hpp"
#include "vpx/parallel.hpp"

namespace vpx {

namespace {

// Channel geometry for ops that reduce over batch and spatial axes.
struct ChannelView {
  int batch = 1;
  int channels = 0;
  std::int64_t spatial = 1;   // product of spatial extents
  std::int64_t sample = 0;    // floats per sample (channels * spatial)
  bool batched = false;
};

ChannelView channel_view(const Tensor& t, const LayerSpec& spec, const char* what) {
  const BatchView bv = split_batch(t, spec.spatial_rank, spec.in_channels, what);
  ChannelView cv;
  cv.batch = bv.batch;
  cv.channels = bv.channels;
  cv.batched = bv.batched;
  cv.spatial = 1;
  for (int e : bv.spatial) cv.spatial *= e;
  cv.sample = cv.channels * cv.spatial;
  return cv;
}

}  // namespace

Tensor batchnorm_forward(const Tensor& input, const LayerSpec& spec, const Tensor& gamma,
                         const Tensor& beta, Tensor& running_mean, Tensor& running_var,
                         bool training, BnCache* cache) {
  check(spec.kind == LayerKind::batchnorm, "batchnorm_forward expects a batchnorm spec");
  spec.validate();
  const ChannelView cv = channel_view(input, spec, "batchnorm input");
  const int c = cv.channels;
  const std::vector<int> pshape{c};
  check(gamma.shape == pshape && beta.shape == pshape,
        "batchnorm gamma/beta must have shape (" + std::to_string(c) + ")");
  check(running_mean.shape == pshape && running_var.shape == pshape,
        "batchnorm running stats must have shape (" + std::to_string(c) + ")");

  const std::int64_t m = std::int64_t(cv.batch) * cv.spatial;
  if (training) {
    check(m >= 2, "batchnorm training needs at least 2 values per channel, got " +
                      std::to_string(m));
  }

  Tensor out(input.shape);
  if (cache) {
    cache->x_hat = Tensor(input.shape);
    cache->inv_std.assign(c, 0.0f);
    cache->per_channel = m;
  }

  parallel_for(c, [&](std::int64_t c0, std::int64_t c1) {
    for (int ch = static_cast<int>(c0); ch < c1; ++ch) {
      float mean, inv_std;
      if (training) {
        double s1 = 0.0, s2 = 0.0;
        for (int n = 0; n < cv.batch; ++n) {
          const float* x = input.ptr() + n * cv.sample + ch * cv.spatial;
          for (std::int64_t i = 0; i < cv.spatial; ++i) {
            s1 += x[i];
            s2 += double(x[i]) * x[i];
          }
        }
        const double mu = s1 / double(m);
        double var = s2 / double(m) - mu * mu;
        if (var < 0.0) var = 0.0;
        mean = static_cast<float>(mu);
        inv_std = static_cast<float>(1.0 / std::sqrt(var + double(kBatchNormEpsilon)));
        const double unbiased = var * double(m) / double(m - 1);
        running_mean.data[ch] = (1.0f - kBatchNormMomentum) * running_mean.data[ch] +
                                kBatchNormMomentum * static_cast<float>(mu);
        running_var.data[ch] = (1.0f - kBatchNormMomentum) * running_var.data[ch] +
                               kBatchNormMomentum * static_cast<float>(unbiased);
      } else {
        mean = running_mean.data[ch];
        const float var = running_var.data[ch];
        check(var >= 0.0f, "running variance for channel " + std::to_string(ch) + " is negative");
        inv_std = 1.0f / std::sqrt(var + kBatchNormEpsilon);
      }
      if (cache) cache->inv_std[ch] = inv_std;
      const float g = gamma.data[ch];
      const float b = beta.data[ch];
      for (int n = 0; n < cv.batch; ++n) {
        const float* x = input.ptr() + n * cv.sample + ch * cv.spatial;
        float* y = out.ptr() + n * cv.sample + ch * cv.spatial;
        float* xh = cache ? cache->x_hat.ptr() + n * cv.sample + ch * cv.spatial : nullptr;
        for (std::int64_t i = 0; i < cv.spatial; ++i) {
          const float h = (x[i] - mean) * inv_std;
          if (xh) xh[i] = h;
          y[i] = g * h + b;
        }
      }
    }
  });
  return out;
}

BnGrads batchnorm_backward(const Tensor& grad_out, const LayerSpec& spec, const Tensor& gamma,
                           const BnCache& cache) {
  check(spec.kind == LayerKind::batchnorm, "batchnorm_backward expects a batchnorm spec");
  check(grad_out.shape == cache.x_hat.shape,
        "batchnorm grad shape " + shape_str(grad_out.shape) + " does not match cached shape " +
            shape_str(cache.x_hat.shape));
  const ChannelView cv = channel_view(grad_out, spec, "batchnorm grad");
  const int c = cv.channels;
  check(static_cast<int>(cache.inv_std.size()) == c, "batchnorm cache channel count mismatch");

  BnGrads grads;
  grads.input = Tensor(grad_out.shape);
  grads.gamma = Tensor({c});
  grads.beta = Tensor({c});
  const double m = static_cast<double>(cache.per_channel);

  parallel_for(c, [&](std::int64_t c0, std::int64_t c1) {
    for (int ch = static_cast<int>(c0); ch < c1; ++ch) {
      double s_g = 0.0, s_gx = 0.0;
      for (int n = 0; n < cv.batch; ++n) {
        const float* g = grad_out.ptr() + n * cv.sample + ch * cv.spatial;
        const float* xh = cache.x_hat.ptr() + n * cv.sample + ch * cv.spatial;
        for (std::int64_t i = 0; i < cv.spatial; ++i) {
          s_g += g[i];
          s_gx += double(g[i]) * xh[i];
        }
      }
      grads.beta.data[ch] = static_cast<float>(s_g);
      grads.gamma.data[ch] = static_cast<float>(s_gx);
      const float k = gamma.data[ch] * cache.inv_std[ch];
      const float mean_g = static_cast<float>(s_g / m);
      const float mean_gx = static_cast<float>(s_gx / m);
      for (int n = 0; n < cv.batch; ++n) {
        const float* g = grad_out.ptr() + n * cv.sample + ch * cv.spatial;
        const float* xh = cache.x_hat.ptr() + n * cv.sample + ch * cv.spatial;
        float* gi = grads.input.ptr() + n * cv.sample + ch * cv.spatial;
        for (std::int64_t i = 0; i < cv.spatial; ++i) {
          gi[i] = k * (g[i] - mean_g - xh[i] * mean_gx);
        }
      }
    }
  });
  return grads;
}

Tensor relu_forward(const Tensor& input) {
  Tensor out(input.shape);
  for (std::size_t i = 0; i < input.data.size(); ++i) {
    out.data[i] = input.data[i] > 0.0f ? input.data[i] : 0.0f;
  }
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
  check(input.shape == grad_out.shape, "relu grad shape " + shape_str(grad_out.shape) +
                                           " does not match input shape " +
                                           shape_str(input.shape));
  Tensor gi(input.shape);
  // Subgradient at exactly zero is zero.
  for (std::size_t i = 0; i < input.data.size(); ++i) {
    gi.data[i] = input.data[i] > 0.0f ? grad_out.data[i] : 0.0f;
  }
  return gi;
}

Tensor maxpool_forward(const Tensor& input, const LayerSpec& spec, PoolCache* cache) {
  check(spec.kind == LayerKind::maxpool, "maxpool_forward expects a maxpool spec");
  spec.validate();
  const BatchView bv = split_batch(input, spec.spatial_rank, 0, "maxpool input");
  const std::vector<int> out_sp = spec.output_extents(bv.spatial);

  // Normalize to three spatial axes, matching the conv kernels.
  const int off = 3 - spec.spatial_rank;
  int in[3] = {1, 1, 1}, k[3] = {1, 1, 1}, s[3] = {1, 1, 1}, out[3] = {1, 1, 1};
  for (int a = 0; a < spec.spatial_rank; ++a) {
    in[off + a] = bv.spatial[a];
    k[off + a] = spec.kernel[a];
    s[off + a] = spec.stride[a];
    out[off + a] = out_sp[a];
  }

  std::vector<int> out_shape;
  if (bv.batched) out_shape.push_back(bv.batch);
  out_shape.push_back(bv.channels);
  for (int a = 0; a < spec.spatial_rank; ++a) out_shape.push_back(out_sp[a]);
  Tensor result(out_shape);
  if (cache) {
    cache->argmax.assign(static_cast<std::size_t>(result.numel()), 0);
    cache->in_shape = input.shape;
  }

  const std::int64_t in_sp = std::int64_t(in[0]) * in[1] * in[2];
  const std::int64_t nc = std::int64_t(bv.batch) * bv.channels;
  parallel_for(nc, [&](std::int64_t i0, std::int64_t i1) {
    for (std::int64_t plane = i0; plane < i1; ++plane) {
      const float* src = input.ptr() + plane * in_sp;
      float* dst = result.ptr() + plane * out[0] * out[1] * out[2];
      std::int64_t oi = plane * out[0] * out[1] * out[2];
      for (int x = 0; x < out[0]; ++x) {
        for (int y = 0; y < out[1]; ++y) {
          for (int d = 0; d < out[2]; ++d) {
            float best = -std::numeric_limits<float>::infinity();
            std::int64_t best_idx = -1;
            // Scan order is ascending flat index, so ties keep the lowest.
            for (int kx = 0; kx < k[0]; ++kx) {
              for (int ky = 0; ky < k[1]; ++ky) {
                const std::int64_t row =
                    (std::int64_t(x * s[0] + kx) * in[1] + (y * s[1] + ky)) * in[2] +
                    d * s[2];
                for (int kz = 0; kz < k[2]; ++kz) {
                  const float v = src[row + kz];
                  if (v > best) {
                    best = v;
                    best_idx = row + kz;
                  }
                }
              }
            }
            *dst++ = best;
            if (cache) cache->argmax[oi] = plane * in_sp + best_idx;
            ++oi;
          }
        }
      }
    }
  });
  return result;
}

Tensor maxpool_backward(const Tensor& grad_out, const LayerSpec& spec, const PoolCache& cache) {
  check(spec.kind == LayerKind::maxpool, "maxpool_backward expects a maxpool spec");
  check(!cache.in_shape.empty(), "maxpool cache is empty");
  check(grad_out.data.size() == cache.argmax.size(),
        "maxpool grad element count " + std::to_string(grad_out.data.size()) +
            " does not match cached output count " + std::to_string(cache.argmax.size()));
  Tensor gi(cache.in_shape);
  for (std::size_t i = 0; i < cache.argmax.size(); ++i) {
    gi.data[static_cast<std::size_t>(cache.argmax[i])] += grad_out.data[i];
  }
  return gi;
}

LossResult mse_loss(const Tensor& pred, const Tensor& target, int num_joints, bool batched) {
  check(num_joints > 0, "num_joints must be positive");
  check(pred.shape == target.shape, "loss operands differ in shape: " + shape_str(pred.shape) +
                                        " vs " + shape_str(target.shape));
  const int batch = batched ? pred.dim(0) : 1;
  const double scale = 1.0 / (double(num_joints) * double(batch));
  LossResult r;
  r.grad = Tensor(pred.shape);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.data.size(); ++i) {
    const double d = double(pred.data[i]) - double(target.data[i]);
    acc += d * d;
    r.grad.data[i] = static_cast<float>(2.0 * scale * d);
  }
  r.value = acc * scale;
  return r;
}

}  // namespace vpx
