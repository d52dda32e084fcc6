#pragma once

#include <stdexcept>
#include <string>

namespace casbench {

// Base of every error raised by the harness. Each subclass maps to a CLI
// exit code in tools/cli_app.cpp.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// An argument lies outside the range an operation accepts (e.g. k > vector length).
class RangeError : public Error {
 public:
  using Error::Error;
};

// A value is mathematically invalid for the operation (empty table, s > n, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// A contract on the call itself was violated (missing stored response, ...).
class PreconditionError : public Error {
 public:
  using Error::Error;
};

// Configuration file or CLI configuration problem.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, int line, const std::string& message)
      : Error(format(field, line, message)), field_(std::move(field)), line_(line) {}
  explicit ConfigError(const std::string& message) : Error(message) {}

  const std::string& field() const noexcept { return field_; }
  // 1-based; 0 when the location is unknown.
  int line() const noexcept { return line_; }

 private:
  static std::string format(const std::string& field, int line, const std::string& message) {
    std::string out = "config error";
    if (!field.empty()) out += " in '" + field + "'";
    if (line > 0) out += " at line " + std::to_string(line);
    return out + ": " + message;
  }

  std::string field_;
  int line_ = 0;
};

// Endpoint unreachable, or retries exhausted on transient failures.
class TransportError : public Error {
 public:
  using Error::Error;
};

// Endpoint rejected the request with a non-retryable status.
class RequestError : public Error {
 public:
  RequestError(int status, const std::string& message)
      : Error(message), status_(status) {}
  int status() const noexcept { return status_; }

 private:
  int status_;
};

// Export of incomplete results without the partial flag.
class PartialResultError : public Error {
 public:
  using Error::Error;
};

// Reporting checklist violated (a mandated parameter is undisclosed).
class ChecklistError : public Error {
 public:
  using Error::Error;
};

}  // namespace casbench
