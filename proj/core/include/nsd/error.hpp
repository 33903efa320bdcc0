#pragma once

#include <stdexcept>
#include <string>

namespace nsd {

/// Error classes. The CLI maps each kind to a distinct exit code.
enum class ErrorKind {
  kDimension,  // shape mismatch in array arithmetic
  kNumeric,    // NaN/Inf, loss divergence
  kIo,         // unreadable or unwritable path
  kFormat,     // malformed or corrupt file
  kData,       // semantically invalid input data
  kConfig,     // invalid configuration or hyperparameter
  kDesign,     // infeasible filter design
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kDimension: return "dimension";
    case ErrorKind::kNumeric: return "numeric";
    case ErrorKind::kIo: return "io";
    case ErrorKind::kFormat: return "format";
    case ErrorKind::kData: return "data";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kDesign: return "design";
  }
  return "unknown";
}

}  // namespace nsd
