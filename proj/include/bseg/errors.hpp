#pragma once

#include <stdexcept>
#include <string>

namespace bseg {

// Shapes that do not conform (matmul inner dims, token counts, channel widths).
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration values: strides, group counts, schedule bounds, budgets.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite evaluations or values outside a function's domain.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operation invoked on an object in an unusable state (e.g. no active queries).
class StateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace bseg
