#pragma once

#include <stdexcept>
#include <string>

namespace hwprox {

// Error taxonomy shared by the library and the CLI exit-code mapping.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad arguments / shape mismatches / out-of-range parameters.
struct ArgumentError : Error {
  using Error::Error;
};

// A file does not start with the expected magic or violates its declared schema.
struct FormatError : Error {
  using Error::Error;
};

// Truncated payloads, dimension overflow, inconsistent headers.
struct CorruptFileError : Error {
  using Error::Error;
};

// Mathematically degenerate input (constant cube for normalize, all-zero spectra, ...).
struct DegenerateInputError : Error {
  using Error::Error;
};

// An iterate became non-finite inside a solver.
struct DivergenceError : Error {
  DivergenceError(const std::string& msg, int iter) : Error(msg), iteration(iter) {}
  int iteration = -1;
};

// Estimated resource use exceeds the configured budget.
struct ResourceError : Error {
  using Error::Error;
};

// Operation not defined for the given spec (e.g. direct prox of a composite).
struct UnsupportedError : Error {
  using Error::Error;
};

// A checked numerical evaluation returned NaN/Inf.
struct EvaluationError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

}  // namespace hwprox
