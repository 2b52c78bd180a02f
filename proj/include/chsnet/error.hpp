#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace chsnet {

// Broad failure categories. The CLI prints the category as the first token of
// its single-line error message and maps it to a distinct exit status.
enum class ErrorKind {
  invalid_argument,
  shape,
  io,
  format,
  config,
  numeric,
};

std::string_view to_string(ErrorKind kind);
int exit_code(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) fail(kind, message);
}

}  // namespace chsnet
