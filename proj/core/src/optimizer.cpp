#include "vpx/optimizer.hpp"

#include "vpx/common.hpp"

namespace vpx {

void SgdOptimizer::step(ParamMap& params, const ParamMap& grads) {
  check(learning_rate >= 0.0f, "learning rate must be non-negative");
  check(momentum >= 0.0f && weight_decay >= 0.0f,
        "momentum and weight decay must be non-negative");
  for (const auto& [name, grad] : grads) {
    auto it = params.find(name);
    check(it != params.end(), "gradient for unknown parameter \"" + name + "\"");
    Tensor& param = it->second;
    check(param.shape == grad.shape,
          "gradient shape " + shape_str(grad.shape) + " does not match parameter \"" + name +
              "\" shape " + shape_str(param.shape));
    auto [vit, inserted] = velocity.try_emplace(name, Tensor(param.shape));
    Tensor& vel = vit->second;
    check(vel.shape == param.shape, "velocity shape drifted for parameter \"" + name + "\"");
    for (std::size_t i = 0; i < param.data.size(); ++i) {
      const float g = grad.data[i] + weight_decay * param.data[i];
      vel.data[i] = momentum * vel.data[i] + g;
      param.data[i] -= learning_rate * vel.data[i];
    }
  }
}

}  // namespace vpx
