#pragma once

#include <stdexcept>
#include <string>

namespace rtb {

/// Numerical failure (factorization breakdown, singular system, ...).
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

/// Input data cannot support the requested fit (too few rows, zero residual, ...).
class degenerate_data_error : public std::runtime_error {
 public:
  explicit degenerate_data_error(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed configuration or data file.
class io_error : public std::runtime_error {
 public:
  explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace rtb
