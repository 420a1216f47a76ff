// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace atkd {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values, too-small vocabularies, malformed shapes in general.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// KL(p||q) with p_j > 0 and q_j = 0.
class InfiniteDivergence : public Error {
 public:
  using Error::Error;
};

/// A loss reduction was requested over zero participating tokens.
class EmptyBatch : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite loss or gradient during training.
class TrainingDivergence : public Error {
 public:
  TrainingDivergence(const std::string& what, std::int64_t step)
      : Error(what), step_(step) {}
  std::int64_t step() const noexcept { return step_; }

 private:
  std::int64_t step_;
};

/// Teacher failed to beat the uniform baseline.
class TrainingFailure : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

enum class ParseErrorKind {
  BadMagic,
  UnsupportedVersion,
  Truncated,
  TrailingBytes,
  InvalidTarget,
  InvalidMask,
  NonFiniteValue,
  InvalidHeader,
};

const char* to_string(ParseErrorKind kind) noexcept;

/// Binary file parse failure; carries the byte offset where parsing stopped.
class ParseError : public Error {
 public:
  ParseError(ParseErrorKind kind, std::uint64_t offset, const std::string& detail);
  ParseErrorKind kind() const noexcept { return kind_; }
  std::uint64_t offset() const noexcept { return offset_; }

 private:
  ParseErrorKind kind_;
  std::uint64_t offset_;
};

}  // namespace atkd
