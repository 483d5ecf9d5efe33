#pragma once

#include <stdexcept>
#include <string>

namespace rlogist {

// Base of every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidSpecError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

// Raised when a NaN/Inf is produced or consumed.
class NumericError : public Error {
 public:
  using Error::Error;
};

class NoLegalActionError : public Error {
 public:
  using Error::Error;
};

class StaleTapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class GenerationError : public Error {
 public:
  using Error::Error;
};

enum class FormatErrorKind { bad_magic, unsupported_version, dimension_mismatch, truncated, invalid_value, io };

class FormatError : public Error {
 public:
  FormatError(FormatErrorKind kind, const std::string& what) : Error(what), kind_(kind) {}
  FormatErrorKind kind() const noexcept { return kind_; }

 private:
  FormatErrorKind kind_;
};

class EmptySlideError : public Error {
 public:
  using Error::Error;
};

class IllegalActionError : public Error {
 public:
  using Error::Error;
};

class EpisodeFinishedError : public Error {
 public:
  using Error::Error;
};

class EmptyRegionError : public Error {
 public:
  using Error::Error;
};

class DegenerateLabelsError : public Error {
 public:
  using Error::Error;
};

class UndefinedAucError : public Error {
 public:
  using Error::Error;
};

class IncompleteEpisodeError : public Error {
 public:
  using Error::Error;
};

class InvalidBufferError : public Error {
 public:
  using Error::Error;
};

class NoDataError : public Error {
 public:
  using Error::Error;
};

}  // namespace rlogist
