// SPDX-License-Identifier: Apache-2.0
//
// Error taxonomy shared by all modules. The CLI maps these onto exit codes.

#pragma once

#include <stdexcept>
#include <string>

namespace dsr {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Tensor shape / axis mismatches.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Math domain violations (log of non-positive input, exp overflow).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration (bad dims, odd batch size, unknown mode, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed or inconsistent input data (CSV parse failures, bad labels).
class DataError : public Error {
 public:
  using Error::Error;
};

// API contract violations (non-scalar loss, missing gradient, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Runtime numeric failures (NaN loss, divergence).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace dsr
