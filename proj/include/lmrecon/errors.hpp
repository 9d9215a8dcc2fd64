#pragma once

#include <stdexcept>
#include <string>

namespace lmr {

// Error taxonomy. The CLI maps each family onto an exit code:
// ConfigError -> 2, DataError and subclasses -> 3, NumericalError and
// subclasses -> 4.

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParameterDomainError : public DataError {
 public:
  using DataError::DataError;
};

class DegenerateInputError : public DataError {
 public:
  using DataError::DataError;
};

class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

class InsufficientSampleError : public DataError {
 public:
  using DataError::DataError;
};

class CollinearityError : public DataError {
 public:
  using DataError::DataError;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalDegeneracyError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class EmbeddingError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class EstimationError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

}  // namespace lmr
