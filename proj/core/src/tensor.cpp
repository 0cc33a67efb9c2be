#include "vpx/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "vpx/common.hpp"

namespace vpx {

std::int64_t shape_numel(const std::vector<int>& shape) {
  std::int64_t n = 1;
  for (int d : shape) {
    check(d > 0, "tensor axis extent must be positive, got " + std::to_string(d) +
                     " in shape " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const std::vector<int>& shape) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ",";
    os << shape[i];
  }
  os << ")";
  return os.str();
}

Tensor::Tensor(std::vector<int> s, float fill) : shape(std::move(s)) {
  data.assign(static_cast<std::size_t>(shape_numel(shape)), fill);
}

int Tensor::dim(int axis) const {
  check(axis >= 0 && axis < rank(),
        "axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank()));
  return shape[axis];
}

std::size_t Tensor::offset(std::initializer_list<int> idx) const {
  check(static_cast<int>(idx.size()) == rank(),
        "index rank " + std::to_string(idx.size()) + " does not match tensor rank " +
            std::to_string(rank()));
  std::size_t off = 0;
  int axis = 0;
  for (int i : idx) {
    check(i >= 0 && i < shape[axis], "index " + std::to_string(i) + " out of range on axis " +
                                         std::to_string(axis) + " of shape " + shape_str(shape));
    off = off * static_cast<std::size_t>(shape[axis]) + static_cast<std::size_t>(i);
    ++axis;
  }
  return off;
}

Tensor take_slice(const Tensor& t, int index) {
  check(t.rank() >= 1, "cannot slice a rank-0 tensor");
  check(index >= 0 && index < t.shape[0],
        "slice index " + std::to_string(index) + " out of range for shape " + shape_str(t.shape));
  Tensor out(std::vector<int>(t.shape.begin() + 1, t.shape.end()));
  const std::size_t per = out.data.size();
  std::copy_n(t.ptr() + per * static_cast<std::size_t>(index), per, out.ptr());
  return out;
}

void check_finite(const Tensor& t, const std::string& what) {
  for (std::size_t i = 0; i < t.data.size(); ++i) {
    if (!std::isfinite(t.data[i])) {
      fail(what + " contains a non-finite value at flat index " + std::to_string(i));
    }
  }
}

}  // namespace vpx
