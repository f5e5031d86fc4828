#pragma once

#include <stdexcept>
#include <string>

namespace cobnet {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes or out-of-range dimensions.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Malformed tensor files, checkpoints or manifests.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Input values outside of their admissible domain (e.g. non-binary targets).
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Invalid hyper-parameters or inconsistent run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A support mask with no foreground pixel at feature resolution.
class EmptyMaskError : public Error {
 public:
  using Error::Error;
};

// API misuse, e.g. calling backward on a non-scalar.
class UsageError : public Error {
 public:
  using Error::Error;
};

// A required artifact (checkpoint, feature file) does not exist.
class MissingArtifactError : public Error {
 public:
  using Error::Error;
};

}  // namespace cobnet
