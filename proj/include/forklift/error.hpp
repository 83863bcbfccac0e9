#pragma once

#include <stdexcept>
#include <string>

namespace forklift {

// Caller broke a documented precondition (stepping a finished episode,
// mismatched buffer lengths, ...).
class ContractViolation : public std::logic_error {
 public:
  explicit ContractViolation(const std::string& what) : std::logic_error(what) {}
};

// Bad user-supplied configuration or artifact (schema, version, file format).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Training produced non-finite numbers.
class DivergenceError : public std::runtime_error {
 public:
  explicit DivergenceError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace forklift
