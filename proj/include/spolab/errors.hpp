#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace spolab {

// Invalid run configuration or CLI flag combination.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed serialized artifact (snapshot, fixture, manifest). `field` names
// the offending key when known.
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& msg, std::string field = {})
      : std::runtime_error(field.empty() ? msg : msg + " (field: " + field + ")"),
        field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace spolab
