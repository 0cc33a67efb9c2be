#pragma once

#include <cstdint>
#include <vector>

#include "vpx/tensor.hpp"

namespace vpx {

enum class LayerKind { conv, batchnorm, relu, maxpool };

// Shape contract for one tensor op. Spatial rank is 2 (H,W) or 3 (X,Y,D);
// kernel/stride/padding carry one entry per spatial axis. Convolutions are
// cross-correlations (no kernel flip) and require odd kernel extents so that
// "same" padding of (k-1)/2 preserves spatial dims at stride 1.
struct LayerSpec {
  LayerKind kind = LayerKind::conv;
  int spatial_rank = 2;
  int in_channels = 0;
  int out_channels = 0;
  std::vector<int> kernel;
  std::vector<int> stride;
  std::vector<int> padding;

  static LayerSpec conv(int spatial_rank, int in_ch, int out_ch, std::vector<int> kernel,
                        std::vector<int> stride, std::vector<int> padding);
  // Stride-1 convolution padded to preserve spatial extents.
  static LayerSpec conv_same(int spatial_rank, int in_ch, int out_ch, int kernel);
  static LayerSpec batchnorm(int spatial_rank, int channels);
  static LayerSpec relu(int spatial_rank);
  static LayerSpec maxpool(int spatial_rank, std::vector<int> window, std::vector<int> stride);

  void validate() const;
  // floor((in + 2*pad - kernel) / stride) + 1 per axis; rejects non-positive results.
  std::vector<int> output_extents(const std::vector<int>& in_spatial) const;
  std::vector<int> weight_shape() const;  // (out_ch, in_ch, kernel...)
};

// Inputs may be unbatched (C, spatial...) or batched (N, C, spatial...);
// outputs preserve the input's batching. Describes which view applies.
struct BatchView {
  int batch = 1;
  int channels = 0;
  std::vector<int> spatial;
  bool batched = false;
};
BatchView split_batch(const Tensor& t, int spatial_rank, int expect_channels, const char* what);

Tensor conv_forward(const Tensor& input, const LayerSpec& spec, const Tensor& weights,
                    const Tensor& bias);

struct ConvGrads {
  Tensor input;
  Tensor weights;
  Tensor bias;
};
ConvGrads conv_backward(const Tensor& input, const LayerSpec& spec, const Tensor& weights,
                        const Tensor& grad_out);

// Cache written by training-mode forward and consumed by backward.
struct BnCache {
  Tensor x_hat;
  std::vector<float> inv_std;
  std::int64_t per_channel = 0;  // reduction count per channel
};

// Training mode normalizes with biased batch variance and folds the batch
// statistics into the running estimates (momentum 0.1, unbiased variance).
// Eval mode normalizes with the running estimates and leaves them untouched.
Tensor batchnorm_forward(const Tensor& input, const LayerSpec& spec, const Tensor& gamma,
                         const Tensor& beta, Tensor& running_mean, Tensor& running_var,
                         bool training, BnCache* cache);

struct BnGrads {
  Tensor input;
  Tensor gamma;
  Tensor beta;
};
BnGrads batchnorm_backward(const Tensor& grad_out, const LayerSpec& spec, const Tensor& gamma,
                           const BnCache& cache);

Tensor relu_forward(const Tensor& input);
Tensor relu_backward(const Tensor& input, const Tensor& grad_out);

struct PoolCache {
  std::vector<std::int64_t> argmax;  // flat input index per output cell
  std::vector<int> in_shape;
};
// Ties select the lowest flat input index. No padding; windows must fit.
Tensor maxpool_forward(const Tensor& input, const LayerSpec& spec, PoolCache* cache);
Tensor maxpool_backward(const Tensor& grad_out, const LayerSpec& spec, const PoolCache& cache);

struct LossResult {
  double value = 0.0;
  Tensor grad;
};
// Sum of squared differences scaled by 1/num_joints, and by 1/batch when
// batched. grad is d(loss)/d(pred) under the same scaling.
LossResult mse_loss(const Tensor& pred, const Tensor& target, int num_joints, bool batched);

constexpr float kBatchNormEpsilon = 1e-5f;
constexpr float kBatchNormMomentum = 0.1f;

}  // namespace vpx
