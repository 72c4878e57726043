#pragma once

#include <stdexcept>
#include <string>

namespace nwc {

// Broken caller precondition (shape mismatch, out-of-range index).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Root of all runtime failures raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user-provided input content (non-finite weights, empty dataset, ...).
class InputError : public Error {
 public:
  using Error::Error;
};

// NaN/Inf in a computation, divergence, singular factorization, overflow.
class NumericError : public Error {
 public:
  using Error::Error;
};

// File-level problems: I/O failure, bad magic, malformed header.
class FormatError : public Error {
 public:
  using Error::Error;
};

class TruncatedError : public FormatError {
 public:
  using FormatError::FormatError;
};

class UnknownVersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

// Payload inconsistent with its own framing (bad coder state, count mismatch).
class CorruptionError : public Error {
 public:
  using Error::Error;
};

class HashMismatchError : public CorruptionError {
 public:
  using CorruptionError::CorruptionError;
};

}  // namespace nwc
