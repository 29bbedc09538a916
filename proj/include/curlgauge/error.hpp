// Copyright 2026 The curlgauge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace curlgauge {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A caller broke a documented precondition (observed position queried,
// invalid permutation, non-finite shift, ...).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

// Context or assignment does not fit the model's shape.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Exhaustive enumeration would exceed the desk-scale caps. Never truncated.
class CapExceeded : public Error {
 public:
  using Error::Error;
};

// Commutator requested with no coordinate left to compare on.
class DegenerateComparison : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace curlgauge
