#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace annp {

// Bad caller input: shapes, ranges, empty collections.
class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed or truncated file. `line` is 0 for binary formats.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string &path, std::size_t line, const std::string &what)
      : std::runtime_error(path + (line ? ":" + std::to_string(line) : "") +
                           ": " + what),
        line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// Non-finite values in a forward pass or loss.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace annp
