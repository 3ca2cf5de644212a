#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace rolealign {

// Bad caller input: malformed data, inconsistent sizes, out-of-range config.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Tracking-file syntax or consistency error. line() is 1-based, 0 when the
// problem is not tied to a single line (e.g. an agent missing from a frame).
class ParseError : public InputError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : InputError(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// A filter or predicate selected nothing.
class EmptySelectionError : public InputError {
 public:
  using InputError::InputError;
};

// Numerically degenerate state that the eigenvalue floor should have prevented.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An iterative procedure that cannot converge on this input.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rolealign
