#pragma once

#include <stdexcept>
#include <string>

namespace layerinfo {

// Base for every failure raised by the library. Callers that only need a
// diagnostic string can catch this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A precondition on caller-supplied arguments was violated.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// A model, dataset or cache entry could not be found or parsed.
class LoadError : public Error {
 public:
  using Error::Error;
};

// The null-context and with-context passes disagree on the scored tokens.
class SpanMismatch : public Error {
 public:
  using Error::Error;
};

// Not enough data for a metric (e.g. a single label class).
class InsufficientData : public Error {
 public:
  using Error::Error;
};

}  // namespace layerinfo
