#pragma once

#include <stdexcept>
#include <string>

namespace rsfc {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration, arguments or parameters.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed, missing or numerically unusable input data.
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace rsfc
