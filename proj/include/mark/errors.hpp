#pragma once

#include <stdexcept>
#include <string>

namespace mark {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class PreconditionError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// type dynamics
class InvalidPair : public Error {
 public:
  using Error::Error;
};

class UnknownType : public Error {
 public:
  using Error::Error;
};

class UnknownProcessName : public Error {
 public:
  using Error::Error;
};

// gateway
class TransportError : public Error {
 public:
  TransportError(const std::string& what, int attempts)
      : Error(what), attempts_(attempts) {}
  int attempts() const noexcept { return attempts_; }

 private:
  int attempts_;
};

class BackendRefusal : public Error {
 public:
  BackendRefusal(int status, std::string body)
      : Error("backend refused request with status " + std::to_string(status)),
        status_(status),
        body_(std::move(body)) {}
  int status() const noexcept { return status_; }
  const std::string& body() const noexcept { return body_; }

 private:
  int status_;
  std::string body_;
};

class SchemaViolation : public Error {
 public:
  SchemaViolation(const std::string& what, std::string last_raw)
      : Error(what), last_raw_(std::move(last_raw)) {}
  const std::string& last_raw() const noexcept { return last_raw_; }

 private:
  std::string last_raw_;
};

class UnscriptedRequest : public Error {
 public:
  using Error::Error;
};

// pipeline
class UnmappableOption : public Error {
 public:
  using Error::Error;
};

// cohorts
class AllMissingColumn : public Error {
 public:
  using Error::Error;
};

class KTooLarge : public Error {
 public:
  using Error::Error;
};

// metrics
class KeyMismatch : public Error {
 public:
  using Error::Error;
};

class OptionSetMismatch : public Error {
 public:
  using Error::Error;
};

}  // namespace mark
