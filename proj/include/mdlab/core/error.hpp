#pragma once

#include <stdexcept>

namespace mdlab {

// Invalid user-supplied configuration (config files, run parameters).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A predictor returned something that violates the prediction contract.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A file on disk does not match its documented schema.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mdlab
