#pragma once

#include <stdexcept>
#include <string>

namespace detdisc {

// Reserved category id for the background detector w_b.
inline constexpr const char* kBackground = "__background__";

// Bad configuration or malformed input files.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Dataset or argument violates a documented precondition.
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values or diverging optimization.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace detdisc
