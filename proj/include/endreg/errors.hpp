#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace endreg {

// Every error raised by the library derives from Error. The C API maps each
// concrete type onto a distinct status code (see endreg.h).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

// A feature column whose L2 norm is below the configured epsilon.
class DegenerateFeatureError : public Error {
 public:
  DegenerateFeatureError(std::size_t sample, const std::string& what)
      : Error(what), sample_(sample) {}
  std::size_t sample() const noexcept { return sample_; }

 private:
  std::size_t sample_;
};

class SpecError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class SplitError : public Error {
 public:
  using Error::Error;
};

class EvalError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  ConfigError(std::string key, const std::string& what)
      : Error(what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace endreg
