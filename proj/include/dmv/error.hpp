#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace dmv {

enum class Errc {
  kMissingColumn,
  kRowArityMismatch,
  kIoFailure,
  kInvalidSchema,
  kInvalidValue,
  kUnparseableGeolocation,
  kOutOfRange,
  kAllMissing,
  kZeroVariance,
  kRowCountMismatch,
  kAuthMissing,
  kProviderError,
  kDimensionMismatch,
  kEmptyMatrix,
  kNonFiniteInput,
  kBadMagic,
  kVersionUnsupported,
  kLengthMismatch,
  kEmpty,
  kBadK,
  kDivisionByZero,
  kInvalidConfig,
  kMissingArtifact,
};

std::string_view errc_name(Errc code);

// Single exception type for the library; callers branch on code().
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(errc_name(code)) + ": " + detail),
        code_(code),
        detail_(detail) {}

  Errc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

}  // namespace dmv
