#pragma once

#include <stdexcept>
#include <string>

namespace envelope {

/// Numerical failure (singular system, non-PD matrix, non-finite value).
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed or inconsistent external data (files, CSV, manifests).
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace envelope
