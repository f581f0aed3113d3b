#pragma once

#include <stdexcept>
#include <string>

namespace rtinfer {

/// Invalid or inconsistent user-supplied configuration. `field` names the
/// offending key (dotted path) when one applies.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& message, std::string field = {})
      : std::invalid_argument(field.empty() ? message : field + ": " + message),
        field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Numerical failure during inference (non-finite gradient or parameters).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rtinfer
