#pragma once

#include <stdexcept>
#include <string>

namespace sparsedom {

// Base of every exception thrown by the core. The C API maps each subclass
// to its own status code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A parameter is outside its documented domain (p <= 0, eta not in (0,1), ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A point or cube lies outside the root cube.
class DomainError : public Error {
 public:
  using Error::Error;
};

// An operation's precondition does not hold for otherwise valid inputs.
class PreconditionError : public Error {
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

}  // namespace sparsedom
