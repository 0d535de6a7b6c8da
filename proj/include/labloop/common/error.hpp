#pragma once

#include <stdexcept>
#include <string>

namespace labloop {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Missing or inconsistent configuration (unknown stage, bad bank, bad rubric).
class ConfigError : public Error {
 public:
  using Error::Error;
};

class TransitionError : public Error {
 public:
  using Error::Error;
};

class CorruptCheckpoint : public Error {
 public:
  using Error::Error;
};

class RenderError : public Error {
 public:
  RenderError(const std::string& what, std::string placeholder)
      : Error(what), placeholder_(std::move(placeholder)) {}
  const std::string& placeholder() const { return placeholder_; }

 private:
  std::string placeholder_;
};

// Retryable transport failure (connection refused, 5xx, timeout).
class TransportError : public Error {
 public:
  using Error::Error;
};

// Agent answered but the structured output could not be parsed.
class MalformedOutput : public Error {
 public:
  using Error::Error;
};

class PanelError : public Error {
 public:
  PanelError(const std::string& what, std::string role)
      : Error(what), role_(std::move(role)) {}
  const std::string& role() const { return role_; }

 private:
  std::string role_;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

// A second writer lost a race (ticket already resolved, registry key taken).
class Conflict : public Error {
 public:
  using Error::Error;
};

// The caller asked for something the target does not allow (disallowed gate action, bad flag).
class InvalidRequest : public Error {
 public:
  using Error::Error;
};

class InvariantViolation : public Error {
 public:
  using Error::Error;
};

class StageFailure : public Error {
 public:
  StageFailure(const std::string& what, std::string code)
      : Error(what), code_(std::move(code)) {}
  const std::string& code() const { return code_; }

 private:
  std::string code_;
};

}  // namespace labloop
