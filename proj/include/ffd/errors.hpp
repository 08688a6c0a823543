#pragma once

#include <stdexcept>
#include <string>

namespace ffd {

// Exit-code mapping used by the CLI: config 2, data 3, numerical 4.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// Shape mismatch between tensors. `axis` names the offending axis
// ("channel", "height", ...) so callers can report it precisely.
class DimensionError : public ConfigError {
 public:
  DimensionError(const std::string& axis, const std::string& msg)
      : ConfigError("dimension error [axis: " + axis + "]: " + msg), axis_(axis) {}
  const std::string& axis() const { return axis_; }

 private:
  std::string axis_;
};

}  // namespace ffd
