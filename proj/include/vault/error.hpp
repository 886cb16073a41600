#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace vault {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input: bad JSON, unknown labels, schema violations.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// A lookup for an id that is not present (missing embedding, unknown doc).
class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// A network call that failed after the retry budget was spent, or a
/// response that violates the wire contract.
class TransportError : public Error {
 public:
  TransportError(const std::string& what, bool transient = false)
      : Error(what), transient_(transient) {}

  bool transient() const noexcept { return transient_; }

 private:
  bool transient_;
};

/// Configuration problems; carries every problem found, not just the first.
class ConfigError : public Error {
 public:
  explicit ConfigError(std::vector<std::string> problems);

  const std::vector<std::string>& problems() const noexcept { return problems_; }

 private:
  std::vector<std::string> problems_;
};

}  // namespace vault
