#pragma once

#include <stdexcept>
#include <string>

namespace scalenet {

// Base error. Every message is prefixed with the module that raised it so
// CLI output can be traced back without a stack trace.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& message)
      : std::runtime_error("[" + module + "] " + message), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

// Tensor shape disagreement; `axis` names the offending dimension.
class ShapeError : public Error {
 public:
  ShapeError(std::string module, std::string axis, const std::string& message)
      : Error(std::move(module), "shape mismatch on axis '" + axis + "': " + message),
        axis_(std::move(axis)) {}

  const std::string& axis() const noexcept { return axis_; }

 private:
  std::string axis_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace scalenet
