#pragma once

#include <string>

namespace vpx {

// All library errors are reported as std::runtime_error with a message that
// names the offending quantity. Callers that can recover catch by type.
[[noreturn]] void fail(const std::string& msg);

inline void check(bool ok, const std::string& msg) {
  if (!ok) fail(msg);
}

}  // namespace vpx
