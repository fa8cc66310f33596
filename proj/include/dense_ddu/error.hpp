#pragma once

#include <stdexcept>
#include <string>

namespace ddu {

enum class ErrorKind { config, validation, parse, unsupported_format, fit, numerical, io };

/// Base of every error the toolkit throws. The kind drives CLI exit codes.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

#define DDU_DEFINE_ERROR(Name, Kind)                                          \
  class Name : public Error {                                                 \
   public:                                                                    \
    explicit Name(const std::string& what) : Error(ErrorKind::Kind, what) {}  \
  };

DDU_DEFINE_ERROR(ConfigError, config)
DDU_DEFINE_ERROR(ValidationError, validation)
DDU_DEFINE_ERROR(ParseError, parse)
DDU_DEFINE_ERROR(UnsupportedFormat, unsupported_format)
DDU_DEFINE_ERROR(FitError, fit)
DDU_DEFINE_ERROR(NumericalError, numerical)
DDU_DEFINE_ERROR(IoError, io)

#undef DDU_DEFINE_ERROR

/// Process exit code for an error kind: 2 config/validation, 3 parse/format,
/// 4 numerical/fit, 5 I/O.
inline int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::config:
    case ErrorKind::validation:
      return 2;
    case ErrorKind::parse:
    case ErrorKind::unsupported_format:
      return 3;
    case ErrorKind::fit:
    case ErrorKind::numerical:
      return 4;
    case ErrorKind::io:
      return 5;
  }
  return 1;
}

}  // namespace ddu
