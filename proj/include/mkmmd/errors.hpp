#pragma once

#include <stdexcept>
#include <string>

namespace mkmmd {

/// Malformed or shape-inconsistent input data.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A scalar parameter outside its admissible range.
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input that admits no meaningful answer (e.g. all pairwise distances zero).
class DegenerateInputError : public InputError {
 public:
  using InputError::InputError;
};

/// Non-finite values encountered in a numeric pipeline.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The kernel-weight QP has no feasible point (no positive per-kernel MMD).
class InfeasibleDirectionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// CSV / checkpoint parsing failure. `line()` is 1-based, 0 when not applicable.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line = 0)
      : std::runtime_error(what), line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mkmmd
