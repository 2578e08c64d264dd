#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace benchguard {

// Base of every error raised by the library. Callers that only need to
// report and exit can catch this one type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A precondition or invariant on caller-supplied values does not hold.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A trace, record, or configuration file could not be decoded.
class ParseError : public Error {
 public:
  ParseError(const std::string& what, std::ptrdiff_t record_index = -1)
      : Error(record_index >= 0 ? "record " + std::to_string(record_index) + ": " + what : what),
        record_index_(record_index) {}

  // Index of the offending record, or -1 when not record-specific.
  std::ptrdiff_t record_index() const noexcept { return record_index_; }

 private:
  std::ptrdiff_t record_index_;
};

// The workload executable could not be started.
class LaunchError : public Error {
 public:
  using Error::Error;
};

// A measurement was aborted because a run reported out-of-memory.
class OomError : public Error {
 public:
  using Error::Error;
};

// Too many runs failed to produce a representative measurement.
class MeasurementError : public Error {
 public:
  using Error::Error;
};

class SearchError : public Error {
 public:
  enum class Kind { no_feasible_batch, search_failure };

  SearchError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

class ComparisonError : public Error {
 public:
  using Error::Error;
};

// Baseline store I/O or locking failure.
class StoreError : public Error {
 public:
  using Error::Error;
};

}  // namespace benchguard
