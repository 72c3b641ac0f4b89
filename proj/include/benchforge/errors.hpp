#pragma once

#include <stdexcept>
#include <string>

namespace benchforge {

// Bad input data, bad configuration, violated preconditions.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Remote LLM / embedding / SPARQL endpoint failures, after retries.
class ProviderError : public std::runtime_error {
 public:
  explicit ProviderError(const std::string& what, int status = 0)
      : std::runtime_error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

}  // namespace benchforge
