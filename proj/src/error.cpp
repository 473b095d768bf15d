#include "negmem/error.hpp"

namespace negmem {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::FormatError: return "FormatError";
    case ErrorCode::InsufficientSamples: return "InsufficientSamples";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::EmptyClass: return "EmptyClass";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::InsufficientExternal: return "InsufficientExternal";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::DuplicateClass: return "DuplicateClass";
    case ErrorCode::KTooLarge: return "KTooLarge";
    case ErrorCode::UnknownClassInEvalSet: return "UnknownClassInEvalSet";
    case ErrorCode::EmptyValidation: return "EmptyValidation";
    case ErrorCode::SeparationInfeasible: return "SeparationInfeasible";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Error";
}

}  // namespace negmem
