#pragma once

#include <stdexcept>
#include <string>

namespace crossuda {

/// Error categories surfaced by the library. Tests assert on the kind, not
/// on message text.
enum class ErrorKind {
  io,          // file system failures (open/read/write)
  bad_magic,   // file does not start with the expected magic bytes
  truncated,   // payload shorter than the header implies
  format,      // malformed header / schema violation
  argument,    // precondition violation on an operation argument
  config,      // invalid configuration values
  numeric      // NaN/Inf or other numeric failure during computation
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& msg) {
  throw Error(kind, msg);
}

inline void require(bool cond, ErrorKind kind, const std::string& msg) {
  if (!cond) fail(kind, msg);
}

}  // namespace crossuda
