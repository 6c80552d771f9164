#pragma once

#include <stdexcept>
#include <string>

namespace tscp {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// A caller violated a documented precondition.
class ArgumentError : public Error {
 public:
  explicit ArgumentError(const std::string& msg) : Error(msg) {}
};

/// Input data failed a domain invariant (bad label, non-finite logit, ...).
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& msg) : Error(msg) {}
};

/// A file could not be parsed; carries the 1-based line number when known.
class FormatError : public Error {
 public:
  FormatError(const std::string& msg, long line = -1)
      : Error(line >= 0 ? msg + " (line " + std::to_string(line) + ")" : msg),
        line_(line) {}
  long line() const { return line_; }

 private:
  long line_;
};

/// Two objects that must agree (e.g. a plan and a fitted model) do not.
class ConsistencyError : public Error {
 public:
  explicit ConsistencyError(const std::string& msg) : Error(msg) {}
};

}  // namespace tscp
