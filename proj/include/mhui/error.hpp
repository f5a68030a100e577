#pragma once

#include <stdexcept>
#include <string>

namespace mhui {

enum class ErrorKind {
  invalid_argument,
  dimension_mismatch,
  out_of_range,
  empty_input,
  bad_magic,
  unsupported_version,
  truncated,
  shape_mismatch,
  count_mismatch,
  config,
  io,
  numeric,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_argument: return "invalid argument";
    case ErrorKind::dimension_mismatch: return "dimension mismatch";
    case ErrorKind::out_of_range: return "out of range";
    case ErrorKind::empty_input: return "empty input";
    case ErrorKind::bad_magic: return "bad magic";
    case ErrorKind::unsupported_version: return "unsupported format version";
    case ErrorKind::truncated: return "truncated";
    case ErrorKind::shape_mismatch: return "shape inconsistency";
    case ErrorKind::count_mismatch: return "count mismatch";
    case ErrorKind::config: return "config error";
    case ErrorKind::io: return "io error";
    case ErrorKind::numeric: return "numeric failure";
  }
  return "unknown";
}

/// Every failure raised by the library carries one of the kinds above so
/// callers (and the CLI exit-code mapping) can branch without parsing text.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) throw Error(kind, what);
}

}  // namespace mhui
