#pragma once

#include <stdexcept>
#include <string>

namespace skillforge {

// Base of every error raised by the library. The subclass determines the
// process exit code used by the command-line tool.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input, violated invariant, unknown skill, bad configuration.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// File could not be opened, read, written or renamed.
class IoError : public Error {
 public:
  using Error::Error;
};

// Training produced a non-finite value.
class NumericError : public Error {
 public:
  using Error::Error;
};

inline std::string at_line(const std::string& source, std::size_t line) {
  return source + ":" + std::to_string(line) + ": ";
}

}  // namespace skillforge
