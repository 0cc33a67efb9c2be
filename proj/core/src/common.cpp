#include "vpx/common.hpp"

#include <stdexcept>

namespace vpx {

void fail(const std::string& msg) { throw std::runtime_error(msg); }

}  // namespace vpx
