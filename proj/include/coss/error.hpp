#pragma once

#include <stdexcept>
#include <string>

namespace coss {

enum class ErrorKind { config, input, shape, numeric, state, parse };

const char* to_string(ErrorKind kind);

/// Base of every exception thrown by the library. The kind drives CLI exit codes.
class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& message);
  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

struct ConfigError : Error {
  explicit ConfigError(const std::string& m) : Error(ErrorKind::config, m) {}
};
struct InputError : Error {
  explicit InputError(const std::string& m) : Error(ErrorKind::input, m) {}
};
struct ShapeError : Error {
  explicit ShapeError(const std::string& m) : Error(ErrorKind::shape, m) {}
};
struct NumericError : Error {
  explicit NumericError(const std::string& m) : Error(ErrorKind::numeric, m) {}
};
struct StateError : Error {
  explicit StateError(const std::string& m) : Error(ErrorKind::state, m) {}
};
struct ParseError : Error {
  explicit ParseError(const std::string& m) : Error(ErrorKind::parse, m) {}
};

} // namespace coss
