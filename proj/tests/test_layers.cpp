#include <doctest.h>

#include <cmath>
#include <vector>

#include "fd_check.hpp"
#include "vpx/layers.hpp"
#include "vpx/optimizer.hpp"
#include "vpx/rng.hpp"

using namespace vpx;

TEST_CASE("layer spec validation") {
  CHECK_THROWS(LayerSpec::conv(2, 1, 1, {4, 3}, {1, 1}, {1, 1}));  // even kernel
  CHECK_THROWS(LayerSpec::conv(2, 0, 1, {3, 3}, {1, 1}, {1, 1}));
  CHECK_THROWS(LayerSpec::conv(2, 1, 1, {3}, {1, 1}, {1, 1}));  // rank mismatch
  LayerSpec ok = LayerSpec::conv_same(3, 2, 4, 5);
  CHECK(ok.padding == std::vector<int>{2, 2, 2});
  CHECK(ok.weight_shape() == std::vector<int>{4, 2, 5, 5, 5});
  CHECK(ok.output_extents({7, 8, 9}) == std::vector<int>{7, 8, 9});

  LayerSpec strided = LayerSpec::conv(2, 1, 1, {3, 3}, {2, 2}, {1, 1});
  CHECK(strided.output_extents({7, 8}) == std::vector<int>{4, 4});
  CHECK_THROWS(strided.output_extents({0, 8}));
}

TEST_CASE("conv2d matches a hand-computed example") {
  // 1x1 input channel, 3x3 input, 3x3 kernel, same padding.
  LayerSpec spec = LayerSpec::conv_same(2, 1, 1, 3);
  Tensor input({1, 3, 3});
  for (int i = 0; i < 9; ++i) input.data[static_cast<std::size_t>(i)] = static_cast<float>(i + 1);
  Tensor weights({1, 1, 3, 3}, 0.0f);
  weights.at({0, 0, 1, 1}) = 2.0f;  // center tap: output = 2 * input
  weights.at({0, 0, 0, 0}) = 1.0f;  // upper-left tap: adds input shifted down-right
  Tensor bias({1}, 0.5f);

  Tensor out = conv_forward(input, spec, weights, bias);
  REQUIRE(out.shape == std::vector<int>{1, 3, 3});
  // Cross-correlation: out[v][u] = 2*in[v][u] + in[v-1][u-1] + bias.
  CHECK(out.at({0, 0, 0}) == doctest::Approx(2 * 1 + 0 + 0.5));
  CHECK(out.at({0, 1, 1}) == doctest::Approx(2 * 5 + 1 + 0.5));
  CHECK(out.at({0, 2, 2}) == doctest::Approx(2 * 9 + 5 + 0.5));
  CHECK(out.at({0, 1, 2}) == doctest::Approx(2 * 6 + 2 + 0.5));
}

TEST_CASE("conv 1x1 kernel with unit weight is identity plus bias") {
  for (int rank : {2, 3}) {
    LayerSpec spec = LayerSpec::conv_same(rank, 1, 1, 1);
    std::vector<int> shape{1};
    for (int a = 0; a < rank; ++a) shape.push_back(3 + a);
    Rng rng(3);
    Tensor input = fdtest::random_tensor(shape, rng);
    Tensor weights(spec.weight_shape(), 1.0f);
    Tensor bias({1}, 0.25f);
    Tensor out = conv_forward(input, spec, weights, bias);
    REQUIRE(out.shape == input.shape);
    for (std::size_t i = 0; i < out.data.size(); ++i)
      CHECK(out.data[i] == doctest::Approx(input.data[i] + 0.25f));
  }
}

TEST_CASE("conv channel mixing sums input channels") {
  LayerSpec spec = LayerSpec::conv_same(2, 3, 1, 1);
  Tensor input({3, 2, 2});
  for (std::size_t i = 0; i < input.data.size(); ++i) input.data[i] = static_cast<float>(i);
  Tensor weights({1, 3, 1, 1}, 1.0f);
  Tensor bias({1}, 0.0f);
  Tensor out = conv_forward(input, spec, weights, bias);
  // Each output cell is the sum over the 3 channels at that position.
  CHECK(out.at({0, 0, 0}) == doctest::Approx(0 + 4 + 8));
  CHECK(out.at({0, 1, 1}) == doctest::Approx(3 + 7 + 11));
}

TEST_CASE("stride-1 same-pad conv is translation equivariant in the interior") {
  Rng rng(17);
  LayerSpec spec = LayerSpec::conv_same(2, 2, 3, 3);
  Tensor input = fdtest::random_tensor({2, 8, 8}, rng);
  Tensor weights = fdtest::random_tensor(spec.weight_shape(), rng);
  Tensor bias = fdtest::random_tensor({3}, rng);

  // Shift the input one pixel right.
  Tensor shifted({2, 8, 8}, 0.0f);
  for (int c = 0; c < 2; ++c)
    for (int v = 0; v < 8; ++v)
      for (int u = 1; u < 8; ++u) shifted.at({c, v, u}) = input.at({c, v, u - 1});

  Tensor out = conv_forward(input, spec, weights, bias);
  Tensor out_shifted = conv_forward(shifted, spec, weights, bias);
  // Cells whose receptive field avoids both borders must match the shift.
  for (int c = 0; c < 3; ++c)
    for (int v = 1; v < 7; ++v)
      for (int u = 2; u < 7; ++u)
        CHECK(out_shifted.at({c, v, u}) == doctest::Approx(out.at({c, v, u - 1})).epsilon(1e-5));
}

TEST_CASE("batched conv equals per-sample conv") {
  Rng rng(23);
  LayerSpec spec = LayerSpec::conv(2, 2, 2, {3, 3}, {2, 2}, {1, 1});
  Tensor batch = fdtest::random_tensor({3, 2, 5, 6}, rng);
  Tensor weights = fdtest::random_tensor(spec.weight_shape(), rng);
  Tensor bias = fdtest::random_tensor({2}, rng);

  Tensor out = conv_forward(batch, spec, weights, bias);
  REQUIRE(out.dim(0) == 3);
  for (int n = 0; n < 3; ++n) {
    Tensor single = take_slice(batch, n);
    Tensor expect = conv_forward(single, spec, weights, bias);
    Tensor got = take_slice(out, n);
    REQUIRE(got.shape == expect.shape);
    for (std::size_t i = 0; i < got.data.size(); ++i)
      CHECK(got.data[i] == doctest::Approx(expect.data[i]).epsilon(1e-6));
  }
}

TEST_CASE("conv gradients match finite differences") {
  CHECK(fdtest::conv_suite(2, 3, 101) < 1e-3);
  CHECK(fdtest::conv_suite(3, 3, 102) < 1e-3);
}

TEST_CASE("batchnorm training normalizes with biased batch statistics") {
  // One channel, four values: mean 2.5, biased var 1.25.
  LayerSpec spec = LayerSpec::batchnorm(2, 1);
  Tensor input({2, 1, 1, 2});
  input.data = {1.0f, 2.0f, 3.0f, 4.0f};
  Tensor gamma({1}, 2.0f), beta({1}, 10.0f);
  Tensor rm({1}, 0.0f), rv({1}, 1.0f);

  BnCache cache;
  Tensor out = batchnorm_forward(input, spec, gamma, beta, rm, rv, true, &cache);
  double inv = 1.0 / std::sqrt(1.25 + static_cast<double>(kBatchNormEpsilon));
  CHECK(out.data[0] == doctest::Approx(10.0 + 2.0 * (1.0 - 2.5) * inv).epsilon(1e-5));
  CHECK(out.data[3] == doctest::Approx(10.0 + 2.0 * (4.0 - 2.5) * inv).epsilon(1e-5));

  // Running estimates blend with momentum 0.1; variance uses the unbiased
  // form (n/(n-1) * biased = 4/3 * 1.25).
  CHECK(rm.data[0] == doctest::Approx(0.9 * 0.0 + 0.1 * 2.5).epsilon(1e-6));
  CHECK(rv.data[0] == doctest::Approx(0.9 * 1.0 + 0.1 * (1.25 * 4.0 / 3.0)).epsilon(1e-6));
}

TEST_CASE("batchnorm eval uses running stats and never mutates them") {
  LayerSpec spec = LayerSpec::batchnorm(2, 1);
  Tensor input({1, 1, 2, 2});
  input.data = {2.0f, 4.0f, 6.0f, 8.0f};
  Tensor gamma({1}, 1.0f), beta({1}, 0.0f);
  Tensor rm({1}, 5.0f), rv({1}, 4.0f);

  Tensor out = batchnorm_forward(input, spec, gamma, beta, rm, rv, false, nullptr);
  double inv = 1.0 / std::sqrt(4.0 + static_cast<double>(kBatchNormEpsilon));
  CHECK(out.data[0] == doctest::Approx((2.0 - 5.0) * inv).epsilon(1e-5));
  CHECK(out.data[3] == doctest::Approx((8.0 - 5.0) * inv).epsilon(1e-5));
  CHECK(rm.data[0] == 5.0f);
  CHECK(rv.data[0] == 4.0f);
}

TEST_CASE("batchnorm training rejects single-element reductions") {
  LayerSpec spec = LayerSpec::batchnorm(2, 1);
  Tensor input({1, 1, 1, 1}, 3.0f);
  Tensor gamma({1}, 1.0f), beta({1}, 0.0f), rm({1}), rv({1}, 1.0f);
  CHECK_THROWS(batchnorm_forward(input, spec, gamma, beta, rm, rv, true, nullptr));
  // Eval mode is fine on a single element.
  CHECK_NOTHROW(batchnorm_forward(input, spec, gamma, beta, rm, rv, false, nullptr));
}

TEST_CASE("batchnorm gradients match finite differences") {
  CHECK(fdtest::batchnorm_suite(2, 3, 201) < 1e-3);
  CHECK(fdtest::batchnorm_suite(3, 3, 202) < 1e-3);
}

TEST_CASE("relu forward and backward") {
  Tensor input({5});
  input.data = {-2.0f, -0.5f, 0.0f, 0.5f, 2.0f};
  Tensor out = relu_forward(input);
  CHECK(out.data == std::vector<float>{0.0f, 0.0f, 0.0f, 0.5f, 2.0f});

  Tensor grad_out({5}, 1.0f);
  Tensor grad_in = relu_backward(input, grad_out);
  CHECK(grad_in.data == std::vector<float>{0.0f, 0.0f, 0.0f, 1.0f, 1.0f});

  CHECK(fdtest::relu_suite(5, 301) < 1e-3);
}

TEST_CASE("maxpool picks window maxima and ties resolve to the lowest flat index") {
  LayerSpec spec = LayerSpec::maxpool(2, {2, 2}, {2, 2});
  Tensor input({1, 2, 4});
  input.data = {1.0f, 3.0f, 7.0f, 7.0f,
                3.0f, 2.0f, 7.0f, 5.0f};
  PoolCache cache;
  Tensor out = maxpool_forward(input, spec, &cache);
  REQUIRE(out.shape == std::vector<int>{1, 1, 2});
  CHECK(out.data[0] == 3.0f);
  CHECK(out.data[1] == 7.0f);
  // Window 2 holds three 7s at flat indices 2, 3 and 6; the tie takes 2.
  CHECK(cache.argmax[1] == 2);

  Tensor grad_out({1, 1, 2});
  grad_out.data = {1.0f, 10.0f};
  Tensor grad_in = maxpool_backward(grad_out, spec, cache);
  CHECK(grad_in.data[2] == 10.0f);
  CHECK(grad_in.data[3] == 0.0f);
  CHECK(grad_in.data[6] == 0.0f);
  CHECK(grad_in.data[1] == 1.0f);
}

TEST_CASE("maxpool windows must fit") {
  LayerSpec spec = LayerSpec::maxpool(2, {2, 2}, {2, 2});

  // A trailing remainder row is dropped: only full windows contribute.
  Tensor input({1, 3, 4}, 0.0f);
  input.at({0, 2, 0}) = 9.0f;  // in the dropped row
  Tensor out = maxpool_forward(input, spec, nullptr);
  CHECK(out.shape == std::vector<int>({1, 1, 2}));
  CHECK(out.at({0, 0, 0}) == 0.0f);

  // An input smaller than one window cannot produce any output.
  CHECK_THROWS(maxpool_forward(Tensor({1, 1, 4}, 0.0f), spec, nullptr));
}

TEST_CASE("maxpool gradients match finite differences") {
  CHECK(fdtest::maxpool_suite(2, 3, 401) < 1e-3);
  CHECK(fdtest::maxpool_suite(3, 3, 402) < 1e-3);
}

TEST_CASE("mse loss value and scaling") {
  // Unbatched: sum of squares over all cells, divided by num_joints.
  Tensor pred({2, 1, 2});
  pred.data = {1.0f, 2.0f, 3.0f, 4.0f};
  Tensor target({2, 1, 2});
  target.data = {0.0f, 0.0f, 0.0f, 0.0f};
  LossResult res = mse_loss(pred, target, 2, false);
  CHECK(res.value == doctest::Approx((1.0 + 4.0 + 9.0 + 16.0) / 2.0));
  CHECK(res.grad.at({0, 0, 1}) == doctest::Approx(2.0 * 2.0 / 2.0));

  // Batched: additionally divided by the batch size.
  Tensor bpred({2, 1, 1, 2});
  bpred.data = pred.data;
  Tensor btarget({2, 1, 1, 2});
  btarget.data = target.data;
  LossResult bres = mse_loss(bpred, btarget, 1, true);
  CHECK(bres.value == doctest::Approx((1.0 + 4.0 + 9.0 + 16.0) / 2.0));
  CHECK(bres.grad.data[3] == doctest::Approx(2.0 * 4.0 / 2.0));

  CHECK_THROWS(mse_loss(pred, Tensor({2, 1, 3}), 2, false));  // shape mismatch
}

TEST_CASE("mse gradients match finite differences") {
  CHECK(fdtest::mse_suite(5, 501) < 1e-3);
}

TEST_CASE("sgd follows the momentum and weight-decay update rule") {
  // v <- m*v + (g + wd*p); p <- p - lr*v, hand-stepped twice.
  SgdOptimizer opt;
  opt.learning_rate = 0.1f;
  opt.momentum = 0.5f;
  opt.weight_decay = 0.1f;

  ParamMap params;
  params["w"] = Tensor({1}, 2.0f);
  ParamMap grads;
  grads["w"] = Tensor({1}, 1.0f);

  opt.step(params, grads);
  // v1 = 0.5*0 + (1 + 0.1*2) = 1.2; p1 = 2 - 0.1*1.2 = 1.88
  CHECK(params["w"].data[0] == doctest::Approx(1.88).epsilon(1e-6));

  opt.step(params, grads);
  // v2 = 0.5*1.2 + (1 + 0.1*1.88) = 1.788; p2 = 1.88 - 0.1788 = 1.7012
  CHECK(params["w"].data[0] == doctest::Approx(1.7012).epsilon(1e-6));

  // Unknown gradient keys are an error.
  ParamMap bogus;
  bogus["missing"] = Tensor({1}, 1.0f);
  CHECK_THROWS(opt.step(params, bogus));
}

TEST_CASE("sgd with zero learning rate leaves parameters and no velocity effect") {
  SgdOptimizer opt;
  opt.learning_rate = 0.0f;
  ParamMap params;
  params["w"] = Tensor({2}, 3.0f);
  ParamMap grads;
  grads["w"] = Tensor({2}, 5.0f);
  opt.step(params, grads);
  CHECK(params["w"].data[0] == 3.0f);
  CHECK(params["w"].data[1] == 3.0f);
}
