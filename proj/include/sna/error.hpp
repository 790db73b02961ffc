#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sna {

inline constexpr const char* kVersion = "0.3.0";

// Base for everything the library throws on bad input or bad files.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Caller passed something outside an operation's precondition.
class InputError : public Error {
 public:
  explicit InputError(const std::string& msg, std::string field = {})
      : Error(msg), field_(std::move(field)) {}

  // Name of the offending field, empty when not attributable to one.
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// Checkpoint, config or vocabulary file could not be loaded.
class LoadError : public Error {
 public:
  using Error::Error;
};

// Text format violation; carries the 1-based line number when known.
class ParseError : public Error {
 public:
  ParseError(const std::string& msg, std::size_t line = 0)
      : Error(line ? "line " + std::to_string(line) + ": " + msg : msg), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// Named lookup (preset, model id, job id) failed.
class LookupError : public Error {
 public:
  using Error::Error;
};

}  // namespace sna
