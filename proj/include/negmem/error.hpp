#ifndef NEGMEM_ERROR_HPP_
#define NEGMEM_ERROR_HPP_

#include <stdexcept>
#include <string>

namespace negmem {

enum class ErrorCode {
  ZeroVector,
  FormatError,
  InsufficientSamples,
  IoError,
  EmptyClass,
  DimensionMismatch,
  InsufficientExternal,
  EmptyInput,
  DuplicateClass,
  KTooLarge,
  UnknownClassInEvalSet,
  EmptyValidation,
  SeparationInfeasible,
  ConfigError,
};

const char* to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so the
/// CLI can map it onto an exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace negmem

#endif  // NEGMEM_ERROR_HPP_
