#pragma once

#include <stdexcept>
#include <string>

namespace csiqa {

// Precondition violated by the caller.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Tensor extents do not fit the operation.
class DimensionError : public ContractError {
 public:
  using ContractError::ContractError;
};

// Loss or parameter became NaN/inf.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Correlation requested on data with zero variance.
class UndefinedCorrelation : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Malformed or unreadable input file (image, manifest, checkpoint).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace csiqa
