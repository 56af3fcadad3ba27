#pragma once

#include <stdexcept>
#include <string>

namespace fsv {

// Root of every error the library raises. Callers that only need a message
// can catch this; the subclasses let tests and the CLI tell failures apart.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define FSV_DEFINE_ERROR(Name)         \
  class Name : public Error {          \
   public:                             \
    using Error::Error;                \
  }

FSV_DEFINE_ERROR(DimensionError);
FSV_DEFINE_ERROR(ContractError);
FSV_DEFINE_ERROR(NumericError);
FSV_DEFINE_ERROR(IndexError);
FSV_DEFINE_ERROR(ConfigurationError);
FSV_DEFINE_ERROR(DegenerateBatchError);
FSV_DEFINE_ERROR(DegenerateBasisError);

// Audio / file formats.
FSV_DEFINE_ERROR(FormatError);
FSV_DEFINE_ERROR(UnsupportedFormatError);
FSV_DEFINE_ERROR(TruncationError);
FSV_DEFINE_ERROR(VersionError);
FSV_DEFINE_ERROR(IoError);

// Data protocol.
FSV_DEFINE_ERROR(InsufficientAudioError);
FSV_DEFINE_ERROR(InsufficientDataError);
FSV_DEFINE_ERROR(UndefinedMetricError);

#undef FSV_DEFINE_ERROR

}  // namespace fsv
