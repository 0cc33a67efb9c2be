// Microbenchmarks for the kernels that dominate training and inference.
// Shapes mirror the tiny profile so numbers map onto real iteration costs.

#include <benchmark/benchmark.h>

#include "vpx/heatmap.hpp"
#include "vpx/layers.hpp"
#include "vpx/network.hpp"
#include "vpx/profile.hpp"
#include "vpx/rng.hpp"
#include "vpx/synth.hpp"
#include "vpx/voxelize.hpp"

using namespace vpx;

namespace {

Tensor random_tensor(const std::vector<int>& shape, Rng& rng) {
  Tensor t(shape);
  for (float& v : t.data) v = static_cast<float>(rng.normal());
  return t;
}

void BM_Conv2dForward(benchmark::State& state) {
  Rng rng(1);
  const LayerSpec spec = LayerSpec::conv_same(2, 16, 16, 3);
  const Tensor input = random_tensor({16, 48, 48}, rng);
  const Tensor weights = random_tensor(spec.weight_shape(), rng);
  const Tensor bias = random_tensor({16}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv_forward(input, spec, weights, bias));
}
BENCHMARK(BM_Conv2dForward);

void BM_Conv3dForward(benchmark::State& state) {
  Rng rng(2);
  const LayerSpec spec = LayerSpec::conv_same(3, 8, 8, 5);
  const Tensor input = random_tensor({8, 16, 16, 20}, rng);
  const Tensor weights = random_tensor(spec.weight_shape(), rng);
  const Tensor bias = random_tensor({8}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv_forward(input, spec, weights, bias));
}
BENCHMARK(BM_Conv3dForward);

void BM_Conv3dBackward(benchmark::State& state) {
  Rng rng(3);
  const LayerSpec spec = LayerSpec::conv_same(3, 8, 8, 5);
  const Tensor input = random_tensor({8, 16, 16, 20}, rng);
  const Tensor weights = random_tensor(spec.weight_shape(), rng);
  const Tensor grad = random_tensor({8, 16, 16, 20}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv_backward(input, spec, weights, grad));
}
BENCHMARK(BM_Conv3dBackward);

void BM_RenderFrame(benchmark::State& state) {
  const Profile p = Profile::tiny();
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(generate_dataset(p, "humanoid15", 1, seed++, 1.0));
}
BENCHMARK(BM_RenderFrame);

void BM_BuildLocalGrid(benchmark::State& state) {
  const Profile p = Profile::paper();
  const Dataset ds = generate_dataset(p, "humanoid15", 1, 5, 1.0);
  const DepthMap& map = ds.frames[0].depth;
  const Vec2 px = ds.frames[0].joints[0].pixel;
  const double ref = ds.frames[0].joints[0].world.z;
  for (auto _ : state)
    benchmark::DoNotOptimize(build_local_grid(map, static_cast<int>(px.u), static_cast<int>(px.v),
                                              ref, p.grid_xy, p.grid_xy, p.grid_bins,
                                              p.bin_size_mm));
}
BENCHMARK(BM_BuildLocalGrid);

void BM_GaussianTarget3d(benchmark::State& state) {
  for (auto _ : state) benchmark::DoNotOptimize(gaussian_target_3d(16, 16, 18, 32, 32, 36, 1.0));
}
BENCHMARK(BM_GaussianTarget3d);

void BM_VnetForwardTiny(benchmark::State& state) {
  const Profile p = Profile::tiny();
  Rng rng(4);
  const Model m = build_vnet(15, p, rng);
  const Tensor window = random_tensor({1, p.grid_xy, p.grid_xy, p.grid_crop_bins}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(network_forward_eval(m, window));
}
BENCHMARK(BM_VnetForwardTiny);

}  // namespace

BENCHMARK_MAIN();
