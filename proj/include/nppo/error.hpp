#pragma once

#include <stdexcept>
#include <string>

namespace nppo {

// Base for every error raised by the library. Subclasses only refine the
// category; the message carries the detail.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class StaleCacheError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

// Training produced a NaN/Inf loss. `dump` holds a JSON description of the
// offending minibatch.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, std::string dump)
      : Error(what), dump_(std::move(dump)) {}
  const std::string& dump() const noexcept { return dump_; }

 private:
  std::string dump_;
};

}  // namespace nppo
