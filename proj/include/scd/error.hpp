#pragma once

#include <stdexcept>
#include <string>

namespace scd {

/// Bad input: malformed records, schema violations, out-of-range parameters.
/// The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure while running a stage on otherwise valid input (exit code 2).
class RuntimeFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace scd
