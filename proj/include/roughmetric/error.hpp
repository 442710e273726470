#pragma once

#include <stdexcept>
#include <string>

namespace roughmetric {

// Every failure the library reports derives from Error so callers can catch
// one type; the subclasses name the contract that was broken.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid parameters: dimensions, resolutions, exponents, schedules.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A generator produced values the field types cannot hold.
class SamplingError : public Error {
 public:
  using Error::Error;
};

// Field files or CSV tables that do not match their declared layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Geometric preconditions: regions or polylines outside the domain, empty
// balls, mismatched domains or landmark sets.
class DomainError : public Error {
 public:
  using Error::Error;
};

// No path survives between two nodes (every connecting edge was dropped).
class UnreachableError : public Error {
 public:
  using Error::Error;
};

}  // namespace roughmetric
