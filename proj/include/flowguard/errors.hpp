#pragma once

#include <stdexcept>
#include <string>

namespace flowguard {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad shapes, unknown names, invalid config fields.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf in a loss, gradient or state.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

// Missing or empty inputs (run directories, CSVs, empty sample sets).
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace flowguard
