#pragma once

#include <stdexcept>
#include <string>

namespace maxent {

/// Invalid configuration or command-line input. The CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A non-finite value surfaced in a loss, gradient or network output. Exit code 3.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace maxent
