#pragma once

#include <stdexcept>
#include <string>

namespace lossyckpt {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values where finite data is required.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// Numerical breakdown inside a solver or factorization (zero pivot,
/// non-positive curvature in CG, zero diagonal in Jacobi).
class BreakdownError : public Error {
 public:
  using Error::Error;
};

class CorruptFrameError : public Error {
 public:
  using Error::Error;
};

class UnknownCodecError : public CorruptFrameError {
 public:
  using CorruptFrameError::CorruptFrameError;
};

class DuplicateIdError : public Error {
 public:
  using Error::Error;
};

class StorageError : public Error {
 public:
  using Error::Error;
};

/// Performance-model parameters outside the domain where a formula is
/// defined (e.g. a non-positive denominator).
class ModelInvalidError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace lossyckpt
