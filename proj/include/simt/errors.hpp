#pragma once

#include <stdexcept>
#include <string>

namespace simt {

// Base class for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Shape or operand mismatch while building graph nodes.
struct ShapeError : Error {
  using Error::Error;
};

// Invalid experiment configuration (schema violations, bad values).
struct ConfigError : Error {
  using Error::Error;
};

// Non-finite values or failed numeric contracts at runtime.
struct NumericError : Error {
  using Error::Error;
};

// File I/O, serialization and parse failures.
struct IoError : Error {
  using Error::Error;
};

}  // namespace simt
