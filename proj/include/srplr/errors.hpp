#pragma once

#include <stdexcept>
#include <string>

namespace srplr {

/// Input that fails contract validation (bad config key, out-of-range
/// hyperparameter, mismatched shapes at an API boundary). CLI maps this
/// to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

/// Malformed content in an input file; carries the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& what, std::size_t line)
      : std::runtime_error(what + " (line " + std::to_string(line) + ")"), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Filesystem-level failure (missing file, unwritable directory).
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

/// Training aborted because the loss became non-finite.
class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, int epoch, int batch)
      : std::runtime_error(what), epoch(epoch), batch(batch) {}
  int epoch;
  int batch;
};

}  // namespace srplr
