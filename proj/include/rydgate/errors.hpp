#pragma once

#include <stdexcept>
#include <string>

namespace rydgate {

// Bad argument or precondition violation at an API boundary.
class InvalidArgument : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

// Two atoms closer than the interaction model can represent.
class DegenerateGeometry : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

// NaN/Inf showed up in a loss, gradient or state.
class NumericalFailure : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// The requested system is larger than the dense routines support.
class UnsupportedSize : public std::length_error {
  public:
    using std::length_error::length_error;
};

// Config or input-file problem. `where` is a key path or "file:line".
class ConfigError : public std::runtime_error {
  public:
    ConfigError(std::string where, const std::string& what)
        : std::runtime_error(where.empty() ? what : where + ": " + what),
          where_(std::move(where)) {}

    const std::string& where() const { return where_; }

  private:
    std::string where_;
};

}  // namespace rydgate
