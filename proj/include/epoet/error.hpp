#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace epoet {

enum class ErrorKind {
  structural,
  config,
  argument,
  io,
  numeric,
  optimizer,
  precondition,
  version,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::structural: return "structural-error";
    case ErrorKind::config: return "config-error";
    case ErrorKind::argument: return "argument-error";
    case ErrorKind::io: return "io-error";
    case ErrorKind::numeric: return "numeric-error";
    case ErrorKind::optimizer: return "optimizer-error";
    case ErrorKind::precondition: return "precondition-error";
    case ErrorKind::version: return "version-error";
  }
  return "error";
}

/// Single exception type for the library; `kind()` carries the category.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
  if (!cond) fail(kind, what);
}

}  // namespace epoet
