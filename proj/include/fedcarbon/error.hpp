#pragma once

#include <stdexcept>
#include <string>

namespace fedcarbon {

// Base of every error raised by the library. The category drives the CLI
// exit code (see cli exit-code contract in README).
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input file (bad JSON, wrong value type).
class parse_error : public error {
 public:
  using error::error;
};

// Well-formed input that violates a documented invariant.
class validation_error : public error {
 public:
  using error::error;
};

class unknown_profile_error : public validation_error {
 public:
  using validation_error::validation_error;
};

// Argument outside the mathematical domain of an operation.
class domain_error : public validation_error {
 public:
  using validation_error::validation_error;
};

class dimension_mismatch : public domain_error {
 public:
  using domain_error::domain_error;
};

// Schedule / config disagreement (round count, clients per round).
class inconsistency_error : public validation_error {
 public:
  using validation_error::validation_error;
};

// Label pool cannot satisfy the requested partition.
class exhaustion_error : public validation_error {
 public:
  using validation_error::validation_error;
};

class io_error : public error {
 public:
  using error::error;
};

}  // namespace fedcarbon
