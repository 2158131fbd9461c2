#pragma once

#include <stdexcept>
#include <string>

namespace fab {

// Base for every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Argument outside the mathematical domain of a function.
class DomainError : public Error {
 public:
  using Error::Error;
};

// An iterative method did not meet its tolerance.  Carries the best point
// found so the caller can decide whether it is usable.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double best = 0.0, int iterations = 0)
      : Error(what), best_(best), iterations_(iterations) {}

  double best() const noexcept { return best_; }
  int iterations() const noexcept { return iterations_; }

 private:
  double best_;
  int iterations_;
};

// The data cannot support the requested computation (too few groups,
// groups without a variance estimate, degenerate sums of squares).
class DataError : public Error {
 public:
  using Error::Error;
};

// Malformed input file.  line() is 1-based, 0 when not tied to a line.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::size_t line = 0) : Error(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

namespace detail {

inline void require(bool ok, const char* msg) {
  if (!ok) throw DomainError(msg);
}

}  // namespace detail
}  // namespace fab
