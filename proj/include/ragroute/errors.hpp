#pragma once

#include <stdexcept>
#include <string>

namespace ragroute {

/// Bad input: malformed files, out-of-range labels, inconsistent shapes.
/// The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure while computing (non-finite loss, I/O trouble mid-run). Exit code 2.
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ragroute
