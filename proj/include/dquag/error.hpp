#pragma once

#include <stdexcept>
#include <string>

namespace dquag {

/// Base of every error raised by the library. `kind()` is a stable tag used
/// by the CLI and the Python layer to map failures onto exit codes.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define DQUAG_DEFINE_ERROR(Name)                                    \
  class Name : public Error {                                       \
   public:                                                          \
    explicit Name(const std::string& what) : Error(#Name, what) {}  \
  };

DQUAG_DEFINE_ERROR(SchemaMismatch)
DQUAG_DEFINE_ERROR(RowArity)
DQUAG_DEFINE_ERROR(IoError)
DQUAG_DEFINE_ERROR(DataError)
DQUAG_DEFINE_ERROR(DegenerateColumn)
DQUAG_DEFINE_ERROR(MalformedPayload)
DQUAG_DEFINE_ERROR(ServiceUnreachable)
DQUAG_DEFINE_ERROR(TooFewRows)
DQUAG_DEFINE_ERROR(ShapeMismatch)
DQUAG_DEFINE_ERROR(NotScalar)
DQUAG_DEFINE_ERROR(NonFinite)
DQUAG_DEFINE_ERROR(NonFiniteLoss)
DQUAG_DEFINE_ERROR(EmptyInput)
DQUAG_DEFINE_ERROR(EmptyReport)
DQUAG_DEFINE_ERROR(VersionMismatch)
DQUAG_DEFINE_ERROR(CorruptBundle)
DQUAG_DEFINE_ERROR(NoEligibleRows)
DQUAG_DEFINE_ERROR(InvalidArgument)

#undef DQUAG_DEFINE_ERROR

}  // namespace dquag
