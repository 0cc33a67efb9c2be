#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace vpx {

// Dense row-major float tensor. The last axis is contiguous.
struct Tensor {
  std::vector<int> shape;
  std::vector<float> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s, float fill = 0.0f);

  int rank() const { return static_cast<int>(shape.size()); }
  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }
  int dim(int axis) const;

  float* ptr() { return data.data(); }
  const float* ptr() const { return data.data(); }

  // Flat offset of a multi-index; bounds-checked.
  std::size_t offset(std::initializer_list<int> idx) const;
  float& at(std::initializer_list<int> idx) { return data[offset(idx)]; }
  float at(std::initializer_list<int> idx) const { return data[offset(idx)]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

std::int64_t shape_numel(const std::vector<int>& shape);
std::string shape_str(const std::vector<int>& shape);

// Copy of subtensor t[index] along the first axis; drops that axis.
Tensor take_slice(const Tensor& t, int index);

// Throws if any element is NaN or infinite; `what` names the tensor in the message.
void check_finite(const Tensor& t, const std::string& what);

}  // namespace vpx
