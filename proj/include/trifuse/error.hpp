// Copyright 2026 The trifuse Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace trifuse {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A forward op produced NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Input with no valid position (all-masked sequence, empty split, ...).
class DegenerateInputError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the tape (non-scalar loss, second backward pass).
class TapeError : public Error {
 public:
  using Error::Error;
};

/// Configuration or user input failed validation.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Malformed dataset or checkpoint file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint written by an incompatible format version.
class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Metric undefined for the given labels (e.g. AUC with a single class).
class UndefinedMetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace trifuse
