#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctrfusion {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

std::string shape_string(const std::vector<std::size_t>& shape);

}  // namespace ctrfusion
