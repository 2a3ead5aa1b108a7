#pragma once

#include <stdexcept>
#include <string>

namespace shapecomp {

// Malformed or inconsistent input: files, topology, index ranges.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values, degenerate configurations, failed numeric preconditions.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace shapecomp
