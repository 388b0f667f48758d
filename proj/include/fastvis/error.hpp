#pragma once

#include <stdexcept>
#include <string>

namespace fastvis {

/// Base of every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed serialized input. The message names the offending field.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A value violates a geometric invariant (degenerate box, inverted region...).
class GeometryError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or operation arguments.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Request or response does not satisfy the adapter wire contract. Never retried.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// Transport-level failure (connection refused, timeout). Retryable.
class TransportError : public Error {
 public:
  using Error::Error;
};

/// The backend itself reported a failure; carries the backend's message.
class AdapterError : public Error {
 public:
  using Error::Error;
};

/// The scene oracle cannot interpret the question.
class UnsupportedQuestionError : public AdapterError {
 public:
  using AdapterError::AdapterError;
};

/// A metric is undefined for the given input, or the input is structurally wrong.
class MetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace fastvis
