#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lrdq {

/// Base for every error the library raises on a violated precondition.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Trace ingestion failure; carries the 1-based line number of the offending line.
class ParseError : public Error {
public:
  ParseError(std::size_t line, const std::string& what)
      : Error("line " + std::to_string(line) + ": " + what), line_{line} {}

  std::size_t line() const noexcept { return line_; }

private:
  std::size_t line_;
};

}  // namespace lrdq
