#pragma once

#include <stdexcept>
#include <string>

namespace brushtrace {

// Base of every error the library throws. The CLI maps UsageError to exit
// code 2 and everything else to exit code 1.
class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
  public:
    using Error::Error;
};

class ConfigError : public Error {
  public:
    using Error::Error;
};

class NumericError : public Error {
  public:
    using Error::Error;
};

class UsageError : public Error {
  public:
    using Error::Error;
};

class IoError : public Error {
  public:
    using Error::Error;
};

class FormatError : public Error {
  public:
    using Error::Error;
};

class ValidationError : public Error {
  public:
    using Error::Error;
};

// Training and held-out splits share a painting ID.
class LeakageError : public Error {
  public:
    using Error::Error;
};

class DivergenceError : public Error {
  public:
    using Error::Error;
};

}  // namespace brushtrace
