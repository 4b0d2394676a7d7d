#pragma once

#include <stdexcept>
#include <string>

namespace fgs {

// Base for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class ProtocolError : public Error {
 public:
  using Error::Error;
};

// Raised when an enumeration or state-space guard is exceeded.
class BudgetExceeded : public Error {
 public:
  BudgetExceeded(const std::string& what, double count)
      : Error(what), count_(count) {}
  double count() const { return count_; }

 private:
  double count_;
};

}  // namespace fgs
