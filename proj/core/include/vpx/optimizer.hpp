#pragma once

#include <map>
#include <string>

#include "vpx/tensor.hpp"

namespace vpx {

using ParamMap = std::map<std::string, Tensor>;

// SGD with classic momentum and decoupled-free (L2-in-gradient) weight decay:
//   v <- momentum * v + (grad + weight_decay * param)
//   param <- param - learning_rate * v
// Velocity slots are created lazily as zeros on first sight of a key.
struct SgdOptimizer {
  float learning_rate = 1e-4f;
  float momentum = 0.9f;
  float weight_decay = 5e-4f;
  ParamMap velocity;

  // Applies one update to every key in grads; params must contain each key
  // with a matching shape. Keys are visited in map (lexicographic) order.
  void step(ParamMap& params, const ParamMap& grads);
};

}  // namespace vpx
