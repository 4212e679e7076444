#pragma once

#include <stdexcept>
#include <string>

namespace augkit {

/// Failure category. Maps 1:1 onto the CLI exit codes.
enum class ErrorKind : int {
  kValidation = 1,
  kMetric = 2,
  kIo = 3,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what)
      : Error(ErrorKind::kValidation, what) {}
};

class MetricError : public Error {
 public:
  explicit MetricError(const std::string& what)
      : Error(ErrorKind::kMetric, what) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::kIo, what) {}
};

}  // namespace augkit
