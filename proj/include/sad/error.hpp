#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace sad {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class SymmetryError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

/// Unsupported size for a basis kind, an indivisible downscale, etc.
class SizeError : public Error {
 public:
  using Error::Error;
};

/// Violated operation precondition (non-unit vector, bad eigenvalue gap, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::uint64_t byte_offset)
      : Error(what + " (at byte offset " + std::to_string(byte_offset) + ")"),
        offset_(byte_offset) {}
  explicit ParseError(const std::string& what) : Error(what) {}

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::uint64_t offset_ = 0;
};

class EstimationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A loss or sampler state became non-finite.
class NonFiniteError : public Error {
 public:
  NonFiniteError(const std::string& what, double sigma, std::size_t index)
      : Error(what + " (sigma " + std::to_string(sigma) + ", index " + std::to_string(index) + ")"),
        sigma_(sigma),
        index_(index) {}

  double sigma() const noexcept { return sigma_; }
  std::size_t index() const noexcept { return index_; }

 private:
  double sigma_;
  std::size_t index_;
};

}  // namespace sad
