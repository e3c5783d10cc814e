#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace copyforge {

enum class ErrorKind {
  Configuration,
  Shape,
  Numeric,
  UndefinedSimilarity,
  Integrity,
  Io,
  DegenerateData,
  Template,
  StaleIndex,
  Data,
  Internal,
};

std::string_view to_string(ErrorKind kind) noexcept;

// Every failure raised by the library carries a kind so the C layer can map
// it onto a status code without string matching.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& message);

}  // namespace copyforge
