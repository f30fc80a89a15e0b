#pragma once

#include <stdexcept>
#include <string>

namespace fashrec {

enum class ErrorKind {
  Io,          // file missing, unreadable, unwritable
  Config,      // bad run configuration or invalid parameters
  Validation,  // input data violates a documented invariant
  Transport,   // remote generator / encoder unreachable or misbehaving
  Numeric,     // training diverged, zero vectors, dimension mismatch
};

// All library errors derive from this so callers can map them to exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

inline void require(bool ok, ErrorKind kind, const std::string& what) {
  if (!ok) fail(kind, what);
}

}  // namespace fashrec
