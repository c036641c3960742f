#pragma once

#include <stdexcept>

namespace subinf {

// Invalid configuration or usage (CLI exit code 1).
struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape mismatch between arguments (CLI exit code 2).
struct dimension_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Unreadable or inconsistent input data (CLI exit code 2).
struct data_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite values where finite ones are required (CLI exit code 3).
struct numerical_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace subinf
