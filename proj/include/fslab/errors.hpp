#pragma once

#include <stdexcept>
#include <string>

namespace fslab {

// Wrong shapes, malformed files, violated data preconditions. CLI exit code 2.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite losses or gradients, failed numerical procedures. CLI exit code 3.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad flags or config keys. CLI exit code 1.
class UsageError : public std::runtime_error {
 public:
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace fslab
