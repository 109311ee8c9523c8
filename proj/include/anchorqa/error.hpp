#pragma once

#include <stdexcept>
#include <string>

namespace anchorqa {

// Base for everything the library throws on bad input or failed I/O.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Raised by model/embedding providers. Transient failures are retried by
// the gateway; everything else surfaces immediately.
class ProviderError : public Error {
 public:
  ProviderError(const std::string& what, bool transient = false)
      : Error(what), transient_(transient) {}
  bool transient() const noexcept { return transient_; }

 private:
  bool transient_;
};

}  // namespace anchorqa
