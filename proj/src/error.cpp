#include "coss/error.hpp"

namespace coss {

const char* to_string(ErrorKind kind) {
  switch (kind) {
  case ErrorKind::config: return "config error";
  case ErrorKind::input: return "input error";
  case ErrorKind::shape: return "shape error";
  case ErrorKind::numeric: return "numeric error";
  case ErrorKind::state: return "state error";
  case ErrorKind::parse: return "parse error";
  }
  return "error";
}

Error::Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(message), kind_(kind) {}

} // namespace coss
