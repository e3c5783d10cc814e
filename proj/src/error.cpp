#include "copyforge/error.hpp"

namespace copyforge {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Configuration: return "configuration error";
    case ErrorKind::Shape: return "shape error";
    case ErrorKind::Numeric: return "numeric error";
    case ErrorKind::UndefinedSimilarity: return "undefined similarity";
    case ErrorKind::Integrity: return "integrity error";
    case ErrorKind::Io: return "I/O error";
    case ErrorKind::DegenerateData: return "degenerate data";
    case ErrorKind::Template: return "template error";
    case ErrorKind::StaleIndex: return "stale index";
    case ErrorKind::Data: return "data error";
    case ErrorKind::Internal: return "internal error";
  }
  return "unknown error";
}

void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace copyforge
