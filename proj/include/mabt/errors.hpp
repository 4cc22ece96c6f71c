#pragma once

#include <stdexcept>
#include <string>

namespace mabt {

// Error taxonomy used across the library. The CLI maps these onto exit codes:
// config/usage -> 2, capacity -> 3.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Invalid configuration: bad IndexConfig, incompatible policy/table, malformed
// scenario fields, lookups outside a table's coverage.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Arguments outside an operation's mathematical domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

// A request that would exceed a hard resource guard (e.g. joint-state
// enumeration limits).
class CapacityError : public Error {
 public:
  using Error::Error;
};

// File I/O and parse failures.
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace mabt
