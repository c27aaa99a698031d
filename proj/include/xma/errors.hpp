#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace xma {

// Base of every error the library throws. Subclasses map onto the CLI's
// exit codes: validation-style errors exit 1, runtime errors exit 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class SchemaError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class MappingError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ConfigError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ParseError : public ValidationError {
 public:
  ParseError(const std::string& what, std::size_t line)
      : ValidationError(what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class IntegrityError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class BoundsError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class ShortageError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class StalenessError : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

class IncompleteQueueError : public ValidationError {
 public:
  IncompleteQueueError(const std::string& what, std::vector<std::string> ids)
      : ValidationError(what), ids_(std::move(ids)) {}
  const std::vector<std::string>& ids() const { return ids_; }

 private:
  std::vector<std::string> ids_;
};

class MediaError : public Error {
 public:
  using Error::Error;
};

class LeaseError : public Error {
 public:
  using Error::Error;
};

class LeaseExpiredError : public LeaseError {
 public:
  using LeaseError::LeaseError;
};

class ConflictError : public Error {
 public:
  using Error::Error;
};

class StoreCorruptError : public Error {
 public:
  StoreCorruptError(const std::string& what, std::size_t line,
                    std::uint64_t last_good_seq)
      : Error(what), line_(line), last_good_seq_(last_good_seq) {}
  std::size_t line() const { return line_; }
  std::uint64_t last_good_seq() const { return last_good_seq_; }

 private:
  std::size_t line_;
  std::uint64_t last_good_seq_;
};

// Endpoint failures, typed so the retry policy can tell them apart.
class EndpointError : public Error {
 public:
  using Error::Error;
  virtual bool transient() const { return true; }
};

class TimeoutError : public EndpointError {
 public:
  using EndpointError::EndpointError;
};

class ConnectivityError : public EndpointError {
 public:
  using EndpointError::EndpointError;
};

class HttpError : public EndpointError {
 public:
  HttpError(const std::string& what, int status)
      : EndpointError(what), status_(status) {}
  int status() const { return status_; }
  bool transient() const override { return status_ == 429 || status_ >= 500; }

 private:
  int status_;
};

class MalformedResponseError : public EndpointError {
 public:
  using EndpointError::EndpointError;
  bool transient() const override { return false; }
};

}  // namespace xma
