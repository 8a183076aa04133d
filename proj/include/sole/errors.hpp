#pragma once

#include <stdexcept>
#include <string>

namespace sole {

/// Base of every error raised by the library. `code()` is the stable
/// machine-readable name used in CLI stderr JSON and HTTP job payloads.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& what)
      : std::runtime_error(what), code_(std::move(code)) {}
  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

#define SOLE_DEFINE_ERROR(Name)                                     \
  class Name : public Error {                                       \
   public:                                                          \
    explicit Name(const std::string& what) : Error(#Name, what) {} \
  }

SOLE_DEFINE_ERROR(IOError);
SOLE_DEFINE_ERROR(FormatError);
SOLE_DEFINE_ERROR(EmptyCloudError);
SOLE_DEFINE_ERROR(DegenerateCutError);
SOLE_DEFINE_ERROR(TooFewPointsError);
SOLE_DEFINE_ERROR(UndefinedMetricError);
SOLE_DEFINE_ERROR(TooSmallError);
SOLE_DEFINE_ERROR(DegenerateLabelsError);
SOLE_DEFINE_ERROR(SchemaError);
SOLE_DEFINE_ERROR(StateError);
SOLE_DEFINE_ERROR(PairingError);
SOLE_DEFINE_ERROR(ConfigError);

#undef SOLE_DEFINE_ERROR

}  // namespace sole
