#pragma once

#include <stdexcept>
#include <string>

namespace curdkv {

// Base class for all errors raised by the library.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string &msg) : std::runtime_error(msg) {}
};

// Incompatible or malformed matrix/cache dimensions.
class ShapeError : public Error {
  public:
    explicit ShapeError(const std::string &msg) : Error(msg) {}
};

// Invalid configuration, parameters or file contents.
class ValidationError : public Error {
  public:
    explicit ValidationError(const std::string &msg) : Error(msg) {}
};

// An iterative method failed to converge.
class ConvergenceError : public Error {
  public:
    explicit ConvergenceError(const std::string &msg) : Error(msg) {}
};

// Filesystem / serialization failure.
class IoError : public Error {
  public:
    explicit IoError(const std::string &msg) : Error(msg) {}
};

} // namespace curdkv
